"""Experiment driver: cells -> a_hat -> fine and homogenized solves -> expansion -> rates."""
import csv
import io
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .effective import build_cell_model
from .errors import DegenerateData, ReistokesError, StageError
from .expansion import expand
from .fieldio import write_field
from .fields import PeriodicGrid, sample_coefficient
from .finesolve import macro_points, solve_homogenized, solve_reiterated
from .kernels import BACKEND

log = logging.getLogger("reistokes")

CSV_COLUMNS = ["eps", "err_u_L2", "err_w_H1", "err_p_L2", "h1_norm", "h21_23_norm", "walltime_s"]
EXTRA_COLUMNS = ["macro_points", "solver_residual", "solver_iterations", "div_residual",
                 "err_u_H1", "z_centered_L2", "sum_T_L2", "div_phi_L2", "h22_norm",
                 "C_residual", "C_energy", "C_div_phi"]
RATE_KEYS = {"err_u_L2": "slope_u", "err_w_H1": "slope_w", "err_p_L2": "slope_p"}
CONSTANT_KEYS = ["C_residual", "C_energy", "C_div_phi"]
ZERO_FLOOR = 1e-13


def fit_rate(points):
    """Least-squares fit of log e against log eps; returns (slope, intercept, residual)."""
    pts = list(points)
    if len(pts) < 3:
        raise DegenerateData(f"need at least 3 points, got {len(pts)}")
    eps = np.array([p[0] for p in pts], float)
    err = np.array([p[1] for p in pts], float)
    if np.any(err <= 0) or np.any(eps <= 0):
        raise DegenerateData("errors and eps must be positive")
    X = np.stack([np.log(eps), np.ones_like(eps)], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(err), rcond=None)
    res = float(np.linalg.norm(X @ coef - np.log(err)))
    return float(coef[0]), float(coef[1]), res


@dataclass
class Check:
    name: str
    value: float
    limit: float
    gating: bool = True

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.limit)


@dataclass
class RateReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    spreads: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    a_hat: np.ndarray = None
    ellipticity: str = ""
    cell_checks: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    failure: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self):
        if self.failure:
            return False
        ok = all(c.passed for c in self.checks if c.gating)
        th = self.config.thresholds
        for key, tname in RATE_KEYS.items():
            s = self.slopes.get(key)
            if isinstance(s, tuple) and s[0] < getattr(th, tname):
                ok = False
        for v in self.spreads.values():
            if isinstance(v, float) and not v <= th.constant_spread:
                ok = False
        return ok


def _metadata():
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "backend": BACKEND, "machine": platform.machine(),
            "cpus": os.cpu_count()}


def _stage(name, fn, *args, **kw):
    log.info("stage: %s", name)
    try:
        return fn(*args, **kw)
    except ReistokesError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def _run_eps(cfg, model, eps):
    t0 = time.perf_counter()
    maxiter = cfg.maxiter or None
    M = macro_points(eps, cfg.macro_min)
    tag = f"eps={eps:.6g}"
    se = _stage(f"fine solve ({tag})", solve_reiterated, cfg.coefficient, eps, cfg.domain,
                points=M, rtol=cfg.rtol, maxiter=maxiter)
    s0 = _stage(f"homogenized solve ({tag})", solve_homogenized, model.a_hat, cfg.domain, M,
                rtol=cfg.rtol)
    b = _stage(f"expansion ({tag})", expand, model, eps, se, s0,
               cutoff_multiple=cfg.cutoff_multiple)
    wall = time.perf_counter() - t0
    m, r = b.measures, b.residual_norms
    row = {
        "eps": eps, "err_u_L2": m["err_u_L2"], "err_w_H1": m["err_w_H1"],
        "err_p_L2": m["err_p_L2"], "h1_norm": r["H1"], "h21_23_norm": r["H21+H22+H23"],
        "walltime_s": wall if cfg.record_walltime else None,
        "macro_points": M, "solver_residual": se.residual, "solver_iterations": se.iterations,
        "div_residual": se.div_residual, "err_u_H1": m["err_u_H1"],
        "z_centered_L2": m["z_centered_L2"], "sum_T_L2": r["sum_T"], "div_phi_L2": r["div_phi"],
        "h22_norm": r["H22"], "C_residual": m["C_residual"], "C_energy": m["C_energy"],
        "C_div_phi": m["C_div_phi"],
    }
    return row, b, se, s0, wall


def _eps_checks(cfg, row, b):
    th = cfg.thresholds
    tag = f"[eps={row['eps']:.6g}]"
    torus = cfg.domain.kind == "torus"
    return [
        Check(f"fine solver residual {tag}", row["solver_residual"], cfg.rtol * 1.0001),
        Check(f"div w - div phi {tag}", b.checks["div_w_minus_div_phi"], th.identity_tol),
        # on the square dG is a finite difference, so this is only second-order small
        Check(f"integral of div phi {tag}", b.checks["int_div_phi"], 1e-10, gating=torus),
        Check(f"z_eps rewrite identity {tag}", b.checks["z_identity"], th.identity_tol),
        Check(f"weak-form I1 rewrite {tag}", b.checks.get("weak_I1_rewrite", np.nan), 1e-7,
              gating=torus),
        Check(f"weak-form H2 rewrite {tag}", b.checks.get("weak_H2_rewrite", np.nan), 1e-7,
              gating=torus),
        Check(f"flux expansion identity {tag}", b.checks["flux_expansion_identity"], 1e-4,
              gating=False),
        Check(f"H2 direct-formula gap {tag}", b.checks["H2_formula_gap"], 1e-4, gating=False),
    ]


def _cell_checks(cfg, model):
    c = model.checks
    out = [Check("fast cell residual", c["fast_residual"], cfg.rtol * 1.0001),
           Check("slow cell residual", c["slow_residual"], cfg.rtol * 1.0001),
           Check("a_hat formula consistency", c["a_hat_formula_gap"], 1e-8),
           Check("a_hat ellipticity (1e4 xi)", 0.0 if model.effective.ellipticity.passed else 1.0,
                 0.5)]
    for m in (1, 2, 3):
        out.append(Check(f"skew symmetry E{m}", c[f"skew_E{m}"], 1e-12))
        out.append(Check(f"flux identity I{m}", c[f"flux_identity_{m}"], 1e-9))
        out.append(Check(f"pressure link q{m}", c[f"pressure_link_{m}"], 1e-9))
        out.append(Check(f"Nyquist remainder I{m}", c[f"nyquist_remainder_{m}"], 1e-4,
                         gating=False))
    return out


def _dump(cfg, out_dir, idx, eps, b, se, s0):
    n = cfg.domain.dim
    note = (f"eps = {eps!r}\nmacro points = {se.macro.points}\ndomain = {cfg.domain.kind}\n"
            "layout: RSHF header, component axis first, float64 little-endian\n")
    fields = {"u_eps": se.u, "p_eps": se.p, "u0": s0.u, "p0": s0.p, "w_eps": b.w_eps,
              "phi": b.phi, "z_eps": b.z_eps, "pi_tilde": b.pi_tilde}
    for name, v in fields.items():
        write_field(os.path.join(out_dir, f"eps{idx}_{name}.rshf"), v, n, note + f"field = {name}\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, emit=True, progress=None):
    """Run the full pipeline; writes outputs (also on failure) when ``emit`` is set."""
    out_dir = out_dir or cfg.out_dir
    rep = RateReport(cfg, metadata=_metadata())
    t_all = time.perf_counter()
    try:
        t0 = time.perf_counter()
        n = cfg.coefficient.dim
        coef = _stage("coefficient sampling", sample_coefficient, cfg.coefficient,
                      PeriodicGrid(n, cfg.y_points), PeriodicGrid(n, cfg.z_points),
                      seed=cfg.seed)
        model = _stage("cell problems", build_cell_model, coef, rtol=cfg.rtol,
                       maxiter=cfg.maxiter or None, workers=cfg.workers, seed=cfg.seed,
                       stage_hook=lambda s: log.info("stage: %s", s))
        rep.timings["cells"] = time.perf_counter() - t0
        rep.a_hat = model.a_hat
        rep.ellipticity = model.effective.ellipticity.summary()
        rep.cell_checks = dict(model.checks)
        rep.checks.extend(_cell_checks(cfg, model))
        results = {}
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [(e, pool.submit(_run_eps, cfg, model, e)) for e in cfg.eps]
            for idx, (e, fut) in enumerate(futs):
                row, b, se, s0, wall = fut.result()
                results[e] = row
                rep.rows.append(row)
                rep.timings[f"eps={e:.6g}"] = wall
                rep.checks.extend(_eps_checks(cfg, row, b))
                if cfg.dump_fields and emit:
                    os.makedirs(out_dir, exist_ok=True)
                    _dump(cfg, out_dir, idx, e, b, se, s0)
                if progress:
                    progress(row)
                del b, se, s0
        _fit(rep)
    except StageError as exc:
        rep.failure = str(exc)
        log.error("%s", exc)
        if emit:
            emit_outputs(rep, out_dir)
        raise
    rep.timings["total"] = time.perf_counter() - t_all
    if emit:
        emit_outputs(rep, out_dir)
    return rep


def _fit(rep):
    rows = rep.rows
    for key in list(RATE_KEYS) + ["h21_23_norm", "sum_T_L2", "div_phi_L2"]:
        pts = [(r["eps"], r[key]) for r in rows]
        if len(pts) < 3:
            rep.slopes[key] = "not computed (fewer than 3 eps)"
        elif all(abs(e) <= ZERO_FLOOR for _, e in pts):
            rep.slopes[key] = "degenerate (zero error)"
        else:
            try:
                rep.slopes[key] = fit_rate(pts)
            except DegenerateData as exc:
                rep.slopes[key] = f"degenerate ({exc})"
    for key in CONSTANT_KEYS:
        vals = np.array([r[key] for r in rows], float)
        if len(vals) < 2 or not np.all(np.isfinite(vals)) or np.all(vals <= ZERO_FLOOR):
            rep.spreads[key] = "not computed"
        else:
            rep.spreads[key] = float(vals.max() / vals.min()) if vals.min() > 0 else float("inf")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def rates_csv(rep):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + EXTRA_COLUMNS)
    for r in rep.rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS + EXTRA_COLUMNS])
    return buf.getvalue()


def report_text(rep):
    cfg = rep.config
    L = ["reistokes experiment report", ""]
    L.append(f"config: {cfg.source or '(in memory)'}")
    L.append(f"domain: {cfg.domain.kind}, dim {cfg.domain.dim}, seed {cfg.seed}")
    L.append(f"cells: y {cfg.y_points}, z {cfg.z_points}; cutoff multiple {cfg.cutoff_multiple}")
    L.append("eps: " + ", ".join(f"{e:.6g}" for e in cfg.eps))
    if cfg.domain.kind == "torus":
        L.append("note: the rate theorems are stated for Dirichlet problems on smooth domains; "
                 "torus rates are an extrapolation.")
    else:
        L.append("note: the unit square is Lipschitz, not C^{1,1}; rates are indicative.")
    L.append("environment: " + ", ".join(f"{k}={v}" for k, v in rep.metadata.items()))
    if rep.failure:
        L += ["", f"FAILED: {rep.failure}"]
    if rep.a_hat is not None:
        n = rep.a_hat.shape[0]
        L += ["", "effective tensor a_hat[i, j, alpha, beta]:"]
        for i in range(n):
            for j in range(n):
                for a in range(n):
                    for b in range(n):
                        L.append(f"  {i} {j} {a} {b}  {rep.a_hat[i, j, a, b]: .17e}")
        L.append("ellipticity: " + rep.ellipticity)
    L += ["", "slopes (log-log least squares):"]
    for k, s in rep.slopes.items():
        if isinstance(s, tuple):
            L.append(f"  {k:<14} slope {s[0]: .6f}  intercept {s[1]: .6f}  residual {s[2]:.3e}")
        else:
            L.append(f"  {k:<14} {s}")
    L += ["", "fitted-constant spread (max/min):"]
    for k, s in rep.spreads.items():
        L.append(f"  {k:<14} {s if isinstance(s, str) else format(s, '.6f')}")
    L += ["", "checks:"]
    for c in rep.checks:
        flag = "PASS" if c.passed else ("FAIL" if c.gating else "info")
        L.append(f"  [{flag}] {c.name}: {c.value:.3e} (limit {c.limit:.1e})")
    L += ["", "timings (s):"]
    for k, v in rep.timings.items():
        L.append(f"  {k:<14} {v:.2f}")
    L += ["", f"overall: {'PASS' if rep.passed else 'FAIL'}"]
    return "\n".join(L) + "\n"


def emit_outputs(rep, out_dir):
    """Write rates.csv and report.txt into ``out_dir``."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "rates.csv")
        with open(path, "w", newline="") as fh:
            fh.write(rates_csv(rep))
        path = os.path.join(out_dir, "report.txt")
        with open(path, "w") as fh:
            fh.write(report_text(rep))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return [os.path.join(out_dir, "rates.csv"), os.path.join(out_dir, "report.txt")]


def check_config(cfg: ExperimentConfig, n_xi=64):
    """Validate config and ellipticity of the sampled coefficient without solving."""
    from .fields import check_ellipticity
    n = cfg.coefficient.dim
    coef = sample_coefficient(cfg.coefficient, PeriodicGrid(n, cfg.y_points),
                              PeriodicGrid(n, cfg.z_points), seed=cfg.seed, check=False)
    rep = check_ellipticity(coef.samples, cfg.coefficient.mu, n_xi=n_xi, seed=cfg.seed,
                            raise_on_fail=False)
    if cfg.domain.kind == "square":
        gap = abs(cfg.domain.compatibility_gap())
        ok_compat = gap <= 1e-10
    else:
        gap, ok_compat = 0.0, True
    return rep, gap, rep.passed and ok_compat
