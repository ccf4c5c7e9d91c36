"""Periodic grids, two-scale coefficient tensors and ellipticity checks.

Tensors use the index order ``a[i, j, alpha, beta]`` for a_ij^{alpha beta};
sampled fields keep component axes first and spatial axes last, Y axes
before Z axes.
"""
from dataclasses import dataclass, field
import numpy as np

from .errors import EllipticityViolation, GridError


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the unit torus with spacing 1/points."""

    dim: int
    points: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.dim}")
        N = self.points
        if N < 4 or N & (N - 1):
            raise GridError(f"points per dimension must be a power of two >= 4, got {N}")

    @property
    def spacing(self):
        return 1.0 / self.points

    @property
    def shape(self):
        return (self.points,) * self.dim

    @property
    def size(self):
        return self.points ** self.dim

    def coords1d(self):
        return np.arange(self.points) / self.points

    def coords(self):
        """Node coordinates, shape (dim, *shape)."""
        return np.stack(np.meshgrid(*([self.coords1d()] * self.dim), indexing="ij"))


def identity_tensor(n):
    """delta_ij delta_alpha beta in [i, j, alpha, beta] order."""
    d = np.eye(n)
    return np.einsum("ij,ab->ijab", d, d)


def transpose_tensor(a):
    """Adjoint tensor: (a*)_ij^{ab} = a_ji^{ba}."""
    return np.swapaxes(np.swapaxes(a, 0, 1), 2, 3)


def tensor_to_matrix(a):
    """Reshape [i, j, alpha, beta, ...] into M[(alpha, i), (beta, j), ...]."""
    n = a.shape[0]
    return np.moveaxis(a, (0, 1, 2, 3), (1, 3, 0, 2)).reshape((n * n, n * n) + a.shape[4:])


@dataclass
class CoefficientTerm:
    """amplitude * cos(2 pi (ky.y + kz.z) + phase)."""

    amplitude: np.ndarray
    ky: tuple
    kz: tuple
    phase: float = 0.0

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.ky = tuple(int(k) for k in self.ky)
        self.kz = tuple(int(k) for k in self.kz)


@dataclass
class CoefficientSpec:
    """Sum of trigonometric terms; periodic in y and z with unit period."""

    dim: int
    mu: float
    terms: list = field(default_factory=list)

    def __post_init__(self):
        n = self.dim
        fixed = []
        for t in self.terms:
            amp = np.asarray(t.amplitude, dtype=float)
            if amp.ndim == 0:
                amp = float(amp) * identity_tensor(n)
            if amp.shape != (n,) * 4:
                raise ValueError(f"amplitude must have shape {(n,) * 4}")
            if len(t.ky) != n or len(t.kz) != n:
                raise ValueError("wavevectors must have one entry per dimension")
            fixed.append(CoefficientTerm(amp, t.ky, t.kz, t.phase))
        self.terms = fixed
        if not 0 < self.mu <= 1:
            raise ValueError("mu must lie in (0, 1]")

    @classmethod
    def constant(cls, a, mu):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        return cls(n, mu, [CoefficientTerm(a, (0,) * n, (0,) * n)])

    def add_product(self, amp, ky, fy, kz, fz):
        """Append amp * fy(2 pi ky.y) * fz(2 pi kz.z) with fy, fz in {'sin', 'cos'}."""
        n = self.dim
        amp = np.asarray(amp, dtype=float)
        if amp.ndim == 0:
            amp = float(amp) * identity_tensor(n)
        kzm = tuple(-k for k in kz)
        h = 0.5 * amp
        half = np.pi / 2
        table = {
            ("cos", "cos"): [(h, kz, 0.0), (h, kzm, 0.0)],
            ("sin", "sin"): [(h, kzm, 0.0), (-h, kz, 0.0)],
            ("sin", "cos"): [(h, kz, -half), (h, kzm, -half)],
            ("cos", "sin"): [(h, kz, -half), (-h, kzm, -half)],
        }
        for a_, kz_, ph in table[(fy, fz)]:
            self.terms.append(CoefficientTerm(a_, ky, kz_, ph))
        return self

    @property
    def is_symmetric(self):
        return all(np.allclose(t.amplitude, transpose_tensor(t.amplitude), atol=0, rtol=1e-14)
                   for t in self.terms)

    @property
    def depends_on_y(self):
        return any(any(t.ky) and np.any(t.amplitude) for t in self.terms)

    @property
    def depends_on_z(self):
        return any(any(t.kz) and np.any(t.amplitude) for t in self.terms)

    def lipschitz_y(self):
        """Upper bound on sup |d_y a| (Frobenius norm)."""
        return sum(np.linalg.norm(t.amplitude) * 2 * np.pi * np.linalg.norm(t.ky)
                   for t in self.terms)

    def transpose(self):
        return CoefficientSpec(self.dim, self.mu, [
            CoefficientTerm(transpose_tensor(t.amplitude), t.ky, t.kz, t.phase)
            for t in self.terms])

    def evaluate(self, y, z):
        """Values at points; y and z have shape (dim, ...) and broadcast.

        Returns shape (n, n, n, n, ...).
        """
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        shp = np.broadcast_shapes(y.shape[1:], z.shape[1:])
        n = self.dim
        out = np.zeros((n,) * 4 + shp)
        for t in self.terms:
            theta = sum(t.ky[d] * y[d] + t.kz[d] * z[d] for d in range(n))
            c = np.broadcast_to(np.cos(2 * np.pi * theta + t.phase), shp)
            out += t.amplitude.reshape((n,) * 4 + (1,) * len(shp)) * c
        return out

    def evaluate_macro(self, x, eps):
        """a(x/eps, x/eps^2) on macro points x of shape (dim, ...)."""
        x = np.asarray(x, dtype=float)
        return self.evaluate(x / eps, x / eps ** 2)


@dataclass
class EllipticityReport:
    mu: float
    min_eig: float
    max_eig: float
    min_rayleigh: float
    max_rayleigh: float
    n_points: int
    n_xi: int
    passed: bool

    def summary(self):
        return (f"mu={self.mu:.6g} eig=[{self.min_eig:.6g}, {self.max_eig:.6g}] "
                f"rayleigh=[{self.min_rayleigh:.6g}, {self.max_rayleigh:.6g}] "
                f"points={self.n_points} xi={self.n_xi} "
                f"{'ok' if self.passed else 'VIOLATED'}")


def check_ellipticity(a, mu, n_xi=64, seed=0, tol=1e-10, raise_on_fail=True, chunk=65536):
    """Ellipticity of tensor samples a[i, j, alpha, beta, ...].

    Exact bounds come from eigenvalues of the symmetric part of the
    (n^2 x n^2) matrix at each point; random unit xi give a sampled
    Rayleigh-quotient range on top.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    M = tensor_to_matrix(a).reshape(n * n, n * n, -1)
    P = M.shape[-1]
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n_xi, n * n))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    lo, hi, rlo, rhi = np.inf, -np.inf, np.inf, -np.inf
    for s in range(0, P, chunk):
        Mc = np.moveaxis(M[:, :, s:s + chunk], -1, 0)
        S = 0.5 * (Mc + np.swapaxes(Mc, 1, 2))
        ev = np.linalg.eigvalsh(S)
        lo, hi = min(lo, ev[:, 0].min()), max(hi, ev[:, -1].max())
        q = np.einsum("kr,prc,kc->pk", xi, Mc, xi, optimize=True)
        rlo, rhi = min(rlo, q.min()), max(rhi, q.max())
    passed = bool(lo >= mu * (1 - tol) - tol and hi <= (1 + tol) / mu + tol)
    rep = EllipticityReport(mu, float(lo), float(hi), float(rlo), float(rhi), P, n_xi, passed)
    if raise_on_fail and not passed:
        raise EllipticityViolation(f"ellipticity violated: {rep.summary()}", rep)
    return rep


@dataclass
class TwoScaleCoefficient:
    """Coefficient samples on Y x Z grids, shape (n, n, n, n, *Y, *Z)."""

    spec: CoefficientSpec
    grid_y: PeriodicGrid
    grid_z: PeriodicGrid
    samples: np.ndarray
    ellipticity: EllipticityReport

    @property
    def dim(self):
        return self.spec.dim

    def y_shape(self):
        return self.grid_y.shape

    def z_shape(self):
        return self.grid_z.shape


def sample_coefficient(spec, grid_y, grid_z, n_xi=64, seed=0, check=True):
    """Sample a(y, z) on the product grid and verify ellipticity everywhere."""
    n = spec.dim
    if grid_y.dim != n or grid_z.dim != n:
        raise GridError("grid dimension does not match coefficient")
    y = grid_y.coords()
    z = grid_z.coords()
    ny, nz = grid_y.shape, grid_z.shape
    out = np.zeros((n,) * 4 + ny + nz)
    ey = (slice(None),) * n + (None,) * n
    ez = (None,) * n + (slice(None),) * n
    for t in spec.terms:
        ty = 2 * np.pi * np.tensordot(np.array(t.ky, float), y, axes=1)
        tz = 2 * np.pi * np.tensordot(np.array(t.kz, float), z, axes=1) + t.phase
        c = np.cos(ty)[ey] * np.cos(tz)[ez] - np.sin(ty)[ey] * np.sin(tz)[ez]
        out += t.amplitude.reshape((n,) * 4 + (1,) * (2 * n)) * c
    rep = check_ellipticity(out, spec.mu, n_xi=n_xi, seed=seed, raise_on_fail=check)
    return TwoScaleCoefficient(spec, grid_y, grid_z, out, rep)



@dataclass(frozen=True)
class MacroGrid:
    """Macroscopic grid: torus nodes j*h or square cell centres (j+1/2)*h."""

    kind: str
    points: int
    dim: int = 2

    def __post_init__(self):
        if self.kind not in ("torus", "square"):
            raise GridError(f"unknown domain kind {self.kind!r}")
        N = self.points
        if N < 4 or N & (N - 1):
            raise GridError(f"macro points must be a power of two >= 4, got {N}")
        if self.kind == "square" and self.dim != 2:
            raise GridError("the square domain is implemented for dim = 2 only")

    @property
    def spacing(self):
        return 1.0 / self.points

    @property
    def shape(self):
        return (self.points,) * self.dim

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    def coords1d(self):
        j = np.arange(self.points)
        return (j + 0.5) / self.points if self.kind == "square" else j / self.points

    def coords(self):
        return np.stack(np.meshgrid(*([self.coords1d()] * self.dim), indexing="ij"))

    def periodic_grid(self):
        return PeriodicGrid(self.dim, self.points)

    def dist_to_boundary(self):
        x = self.coords()
        if self.kind == "torus":
            return np.full(self.shape, np.inf)
        return np.minimum(x, 1 - x).min(axis=0)

    def gradient(self, f):
        """Derivative index appended before the grid axes."""
        n = self.dim
        if self.kind == "torus":
            from .spectral import Spectral
            return Spectral(self.periodic_grid()).grad(f)
        axes = tuple(range(f.ndim - n, f.ndim))
        g = np.gradient(f, self.spacing, axis=axes, edge_order=2)
        return np.stack(g, axis=-n - 1)

    def integrate(self, f, mask=None):
        if mask is not None:
            f = f * mask
        return float(np.sum(f)) * self.cell_volume
