"""Mollification, cutoff functions and evaluation of two-scale fields.

The default mollifier is a smooth bump supported in a ball of radius 1/3
centred at (1/6, 0, ...); the support sits inside B(0, 1/2). Its first
moment is non-zero, so S_eps f - f is first order in eps. A centred profile
is available with ``Mollifier(offset=0)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import kernels
from .errors import EpsilonTooSmall, RTooSmall
from .fields import MacroGrid


@dataclass(frozen=True)
class Mollifier:
    offset: float = 1.0 / 6.0
    radius: float = 1.0 / 3.0

    def __post_init__(self):
        if self.offset < 0 or self.offset + self.radius > 0.5 + 1e-15:
            raise ValueError("support must lie inside B(0, 1/2)")

    def profile(self, x):
        """Unnormalized bump at points x of shape (dim, ...)."""
        c = np.zeros(x.shape[0])
        c[0] = self.offset
        s2 = np.sum((x - c.reshape((-1,) + (1,) * (x.ndim - 1))) ** 2, axis=0) / self.radius ** 2
        out = np.zeros(s2.shape)
        inside = s2 < 1
        out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
        return out

    def stencil(self, h, eps, dim=2):
        """Integer offsets m and weights w with sum w = 1; S f(x) = sum w f(x - m h)."""
        if eps < 2 * h * (1 - 1e-12):
            raise EpsilonTooSmall(f"eps={eps:.6g} is below twice the grid spacing {h:.6g}")
        R = int(np.ceil(0.5 * eps / h)) + 1
        r = np.arange(-R, R + 1)
        m = np.stack(np.meshgrid(*([r] * dim), indexing="ij")).reshape(dim, -1)
        w = self.profile(m * h / eps)
        keep = w > 0
        m, w = m[:, keep], w[keep]
        return np.ascontiguousarray(m.T), w / w.sum()


DEFAULT_MOLLIFIER = Mollifier()


def mollify(f, eps, h, boundary="periodic", method="direct", mollifier=DEFAULT_MOLLIFIER):
    """S_eps f on a uniform grid of spacing h; f has shape (..., *grid)."""
    f = np.asarray(f, dtype=float)
    dim = 2 if method == "direct" else f.ndim
    if method == "fft" and f.ndim > 2:
        dim = 2
    offsets, w = mollifier.stencil(h, eps, dim)
    periodic = boundary == "periodic"
    if boundary not in ("periodic", "zero"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    lead = f.shape[:-dim]
    flat = f.reshape((-1,) + f.shape[-dim:])
    if method == "direct":
        out = np.stack([kernels.direct_convolve(x, offsets, w, periodic) for x in flat])
    elif method == "fft":
        out = _fft_convolve(flat, offsets, w, periodic)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out.reshape(lead + f.shape[-dim:])


def _fft_convolve(flat, offsets, w, periodic):
    shape = flat.shape[1:]
    dim = len(shape)
    if periodic:
        L = shape
    else:
        R = int(np.abs(offsets).max())
        L = tuple(sfft.next_fast_len(s + R) for s in shape)
    K = np.zeros(L)
    idx = tuple(np.mod(offsets[:, d], L[d]) for d in range(dim))
    np.add.at(K, idx, w)
    Kh = sfft.rfftn(K)
    axes = tuple(range(1, dim + 1))
    out = sfft.irfftn(sfft.rfftn(flat, s=L, axes=axes) * Kh, s=L, axes=axes)
    return out[(slice(None),) + tuple(slice(0, s) for s in shape)]


# two-scale evaluation -----------------------------------------------------

def interp_matrix(N, t):
    """Rows evaluate the trigonometric interpolant of N-periodic samples at t.

    Dirichlet kernel with the Nyquist mode split symmetrically.
    """
    t = np.asarray(t, dtype=float)
    d = t[:, None] - np.arange(N)[None, :] / N
    k = np.arange(1, N // 2)
    W = 1.0 + 2.0 * np.cos(2 * np.pi * d[..., None] * k).sum(-1) + np.cos(np.pi * N * d)
    return W / N


def _frac(x):
    return x - np.floor(x)


def _axis_matrices(coords1d, eps, ny, nz):
    Wy = interp_matrix(ny, _frac(coords1d / eps))
    if nz is None:
        return Wy
    Wz = interp_matrix(nz, _frac(coords1d / eps ** 2))
    return (Wy[:, :, None] * Wz[:, None, :]).reshape(len(coords1d), ny * nz)


def two_scale_eval(g, eps, macro, grid_y, grid_z=None, method="separable"):
    """Evaluate g(x/eps) or g(x/eps, x/eps^2) on the macro tensor grid.

    g has shape (*comp, *Y) or (*comp, *Y, *Z); the result has shape
    (*comp, *macro.shape).
    """
    n = grid_y.dim
    coords = macro.coords1d() if isinstance(macro, MacroGrid) else np.asarray(macro, float)
    ny = grid_y.points
    nz = None if grid_z is None else grid_z.points
    nsp = n if grid_z is None else 2 * n
    g = np.asarray(g, dtype=float)
    comp = g.shape[:g.ndim - nsp]
    C = int(np.prod(comp))
    x = g.reshape((C,) + g.shape[g.ndim - nsp:])
    if method == "direct":
        return _direct_eval(x, eps, coords, n, grid_z is not None).reshape(comp + (len(coords),) * n)
    K = _axis_matrices(coords, eps, ny, nz)
    if nz is not None:
        # pair Y axis d with Z axis d
        order = [0] + [a for d in range(n) for a in (1 + d, 1 + n + d)]
        x = x.transpose(order).reshape((C,) + (ny * nz,) * n)
    for _ in range(n):
        x = np.tensordot(x, K, axes=([1], [1]))
    return x.reshape(comp + (len(coords),) * n)


def _direct_eval(x, eps, coords, n, two_scale):
    """Fourier synthesis with complex exponentials, the independent route."""
    C = x.shape[0]
    shp = x.shape[1:]
    axes = tuple(range(1, x.ndim))
    c = np.fft.fftn(x, axes=axes) / np.prod(shp)
    ev = []
    for a, N in enumerate(shp):
        scale = eps if (a < n) else eps ** 2
        k = np.fft.fftfreq(N, 1.0 / N)
        t = _frac(coords / scale)
        Ek = np.exp(2j * np.pi * t[:, None] * k[None, :])
        nyq = N // 2
        Ek[:, nyq] = np.cos(np.pi * N * t)
        ev.append(Ek)
    if two_scale:
        letters_y = "abc"[:n]
        letters_z = "def"[:n]
        out_l = "uvw"[:n]
        spec = ",".join(f"{out_l[d]}{letters_y[d]}" for d in range(n)) + "," + \
            ",".join(f"{out_l[d]}{letters_z[d]}" for d in range(n)) + \
            f",X{letters_y}{letters_z}->X{out_l}"
        r = np.einsum(spec, *ev, c, optimize=True)
    else:
        letters_y = "abc"[:n]
        out_l = "uvw"[:n]
        spec = ",".join(f"{out_l[d]}{letters_y[d]}" for d in range(n)) + \
            f",X{letters_y}->X{out_l}"
        r = np.einsum(spec, *ev, c, optimize=True)
    return r.real


def two_scale_eval_points(g, eps, points, grid_y, grid_z=None):
    """Evaluate at scattered points of shape (P, dim); returns (*comp, P)."""
    n = grid_y.dim
    points = np.asarray(points, dtype=float)
    nsp = n if grid_z is None else 2 * n
    comp = g.shape[:g.ndim - nsp]
    x = g.reshape((-1,) + g.shape[g.ndim - nsp:])
    mats = [interp_matrix(grid_y.points, _frac(points[:, d] / eps)) for d in range(n)]
    if grid_z is not None:
        mats += [interp_matrix(grid_z.points, _frac(points[:, d] / eps ** 2)) for d in range(n)]
    letters = "abcdef"[:nsp]
    spec = ",".join(f"p{l}" for l in letters) + f",X{letters}->Xp"
    return np.einsum(spec, *mats, x, optimize=True).reshape(comp + (len(points),))


# cutoff -------------------------------------------------------------------

@dataclass
class CutoffField:
    r: float
    values: np.ndarray
    inner_mask: np.ndarray
    outer_mask: np.ndarray
    gradient_constant: float


def cutoff(macro: MacroGrid, r, mollifier=DEFAULT_MOLLIFIER, method="direct"):
    """psi_r: 1 on Sigma_2r, 0 outside Sigma_r, |grad psi| <= C / r."""
    if macro.kind == "torus":
        ones = np.ones(macro.shape)
        mask = np.ones(macro.shape, dtype=bool)
        return CutoffField(r, ones, mask, mask, 0.0)
    h = macro.spacing
    if r <= 2 * h:
        raise RTooSmall(f"r={r:.6g} must exceed twice the grid spacing {h:.6g}")
    dist = macro.dist_to_boundary()
    inner = dist >= 2 * r
    outer = dist > r
    ind = (dist > 1.5 * r).astype(float)
    if not ind.any():
        return CutoffField(r, np.zeros(macro.shape), inner, outer, 0.0)
    psi = mollify(ind, r, h, boundary="zero", method=method, mollifier=mollifier)
    psi = np.clip(psi, 0.0, 1.0)
    g = macro.gradient(psi)
    C = float(np.sqrt((g ** 2).sum(axis=0)).max() * r)
    return CutoffField(r, psi, inner, outer, C)
