"""TOML experiment configuration.

Schema (all tables optional except ``coefficient``, ``domain`` and ``sweep``)::

    seed = 0
    workers = 1
    record_walltime = false

    [coefficient]
    dim = 2
    mu = 0.4
    constant = 1.0              # scalar (times delta delta) or nested n^4 list
    [[coefficient.products]]    # amplitude * fy(2 pi ky.y) * fz(2 pi kz.z)
    amplitude = 0.3
    ky = [1, 0]
    fy = "sin"
    kz = [0, 1]
    fz = "sin"
    [[coefficient.terms]]       # amplitude * cos(2 pi (ky.y + kz.z) + phase)
    amplitude = 0.1
    ky = [1, 1]
    kz = [0, 0]
    phase = 0.0

    [domain]
    kind = "torus"              # or "square"
    [[domain.forcing]]          # component, k, amplitude, phase; cos(2 pi k.x + phase)
    [[domain.divergence]]       # k, amplitude, phase
    [[domain.boundary]]         # square only: component, k, amplitude, phase

    [sweep]
    eps = ["1/2", "1/3", "1/4"] # numbers or "p/q" strings, strictly decreasing

    [grids]
    y_points = 16
    z_points = 32
    macro_min = 64
    macro_max = 512

    [expansion]
    cutoff_multiple = 2.0

    [solver]
    rtol = 1e-10
    maxiter = 0                 # 0 means automatic

    [thresholds]
    slope_u = 0.9
    slope_w = 0.45
    slope_p = 0.45
    constant_spread = 2.0
    identity_tol = 1e-8

    [output]
    dir = "out"
    dump_fields = false
"""
import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .fields import CoefficientSpec, CoefficientTerm
from .finesolve import DomainSpec, ModeTerm, macro_points


def parse_eps(v):
    """Accept 0.25, "0.25" or "1/4"."""
    try:
        if isinstance(v, str):
            return float(Fraction(v.strip()))
        return float(v)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad eps value {v!r}") from exc


@dataclass
class Thresholds:
    slope_u: float = 0.9
    slope_w: float = 0.45
    slope_p: float = 0.45
    constant_spread: float = 2.0
    identity_tol: float = 1e-8


@dataclass
class ExperimentConfig:
    coefficient: CoefficientSpec
    domain: DomainSpec
    eps: list
    y_points: int = 16
    z_points: int = 32
    macro_min: int = 64
    macro_max: int = 512
    cutoff_multiple: float = 2.0
    rtol: float = 1e-10
    maxiter: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)
    out_dir: str = "out"
    dump_fields: bool = False
    seed: int = 0
    workers: int = 1
    record_walltime: bool = False
    source: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if any(e <= 0 or e > 1 for e in self.eps):
            raise ConfigError("every eps must lie in (0, 1]")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        for name in ("y_points", "z_points", "macro_min", "macro_max"):
            v = getattr(self, name)
            if v < 4 or v & (v - 1):
                raise ConfigError(f"{name} must be a power of two >= 4, got {v}")
        for e in self.eps:
            M = macro_points(e, self.macro_min)
            if M > self.macro_max:
                raise ConfigError(f"eps={e:.6g} needs a {M}-point macro grid, above macro_max="
                                  f"{self.macro_max}")
        if self.domain.dim != self.coefficient.dim:
            raise ConfigError("domain and coefficient dimensions differ")
        if self.cutoff_multiple <= 0:
            raise ConfigError("cutoff_multiple must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def with_overrides(self, eps=None, workers=None, seed=None, out_dir=None, dump_fields=None):
        kw = {}
        if eps is not None:
            kw["eps"] = list(eps)
        if workers is not None:
            kw["workers"] = int(workers)
        if seed is not None:
            kw["seed"] = int(seed)
        if out_dir is not None:
            kw["out_dir"] = str(out_dir)
        if dump_fields is not None:
            kw["dump_fields"] = bool(dump_fields)
        return replace(self, **kw)


def _modes(items, vector, dim, what):
    out = []
    for it in items or []:
        try:
            comp = int(it["component"]) if vector else 0
            k = tuple(int(v) for v in it["k"])
            if len(k) != dim:
                raise ConfigError(f"{what}: k must have {dim} entries")
            out.append(ModeTerm(comp, k, float(it["amplitude"]), float(it.get("phase", 0.0))))
        except KeyError as exc:
            raise ConfigError(f"{what}: missing key {exc}") from exc
    return out


def _coefficient(tab):
    dim = int(tab.get("dim", 2))
    mu = float(tab["mu"])
    terms = []
    if "constant" in tab:
        terms.append(CoefficientTerm(np.asarray(tab["constant"], float), (0,) * dim, (0,) * dim))
    for t in tab.get("terms", []):
        terms.append(CoefficientTerm(np.asarray(t["amplitude"], float), t.get("ky", [0] * dim),
                                     t.get("kz", [0] * dim), float(t.get("phase", 0.0))))
    try:
        spec = CoefficientSpec(dim, mu, terms)
        for p in tab.get("products", []):
            spec.add_product(np.asarray(p["amplitude"], float), p.get("ky", [0] * dim),
                             p.get("fy", "cos"), p.get("kz", [0] * dim), p.get("fz", "cos"))
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"coefficient: {exc}") from exc
    if not spec.terms:
        raise ConfigError("coefficient has no terms")
    return spec


def config_from_dict(d, source=""):
    if "coefficient" not in d or "domain" not in d or "sweep" not in d:
        raise ConfigError("config needs [coefficient], [domain] and [sweep] tables")
    spec = _coefficient(d["coefficient"])
    dt = d["domain"]
    dim = spec.dim
    try:
        domain = DomainSpec(dt.get("kind", "torus"), dim,
                            _modes(dt.get("forcing"), True, dim, "forcing"),
                            _modes(dt.get("divergence"), False, dim, "divergence"),
                            _modes(dt.get("boundary"), True, dim, "boundary"))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"domain: {exc}") from exc
    g = d.get("grids", {})
    s = d.get("solver", {})
    th = d.get("thresholds", {})
    o = d.get("output", {})
    known = set(Thresholds.__dataclass_fields__)
    if set(th) - known:
        raise ConfigError(f"unknown thresholds {sorted(set(th) - known)}")
    return ExperimentConfig(
        coefficient=spec,
        domain=domain,
        eps=[parse_eps(e) for e in d["sweep"].get("eps", [])],
        y_points=int(g.get("y_points", 16)),
        z_points=int(g.get("z_points", 32)),
        macro_min=int(g.get("macro_min", 64)),
        macro_max=int(g.get("macro_max", 512)),
        cutoff_multiple=float(d.get("expansion", {}).get("cutoff_multiple", 2.0)),
        rtol=float(s.get("rtol", 1e-10)),
        maxiter=int(s.get("maxiter", 0)),
        thresholds=Thresholds(**{k: float(v) for k, v in th.items()}),
        out_dir=str(o.get("dir", "out")),
        dump_fields=bool(o.get("dump_fields", False)),
        seed=int(d.get("seed", 0)),
        workers=int(d.get("workers", 1)),
        record_walltime=bool(d.get("record_walltime", False)),
        source=source,
    )


def load_config(path):
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(d, source=str(path))
