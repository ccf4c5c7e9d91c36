"""Periodic Stokes cell problems and the corrector families built from them.

The generic problem on the unit torus is

    -div(a grad u) + grad p = f - div G,   div u = h,

with mean-zero u and p. It is discretized by Fourier collocation and solved
by preconditioned conjugate gradients on truncated divergence-free fields
(GMRES when a is not symmetric).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import kernels
from .errors import NoConvergence, NonZeroMean
from .fields import PeriodicGrid, TwoScaleCoefficient, check_ellipticity, tensor_to_matrix
from .spectral import Spectral

DEFAULT_RTOL = 1e-10


@dataclass
class CellSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    residual: np.ndarray
    iterations: int
    method: str


def _weights(sp):
    """Parseval weights for the half spectrum."""
    w = np.full(sp.hshape, 2.0)
    w[..., 0] = 1.0
    if sp.N % 2 == 0:
        w[..., -1] = 1.0
    return w * sp.keep


# right-hand sides this small relative to the largest in the batch are
# rounding noise (e.g. y nodes where the z-variation cancels) and are solved as zero
NOISE_FLOOR = 1e-14


def _live(bnorm):
    return bnorm > NOISE_FLOOR * bnorm.max() if bnorm.size else bnorm > 0


class _Operator:
    """Projected operator P T L acting on half spectra of shape (Ba, Bg, n, *h)."""

    def __init__(self, coeff, sp):
        n = sp.n
        self.sp = sp
        self.n = n
        # coeff: (Ba, n, n, n, n, *sp)
        Ba = coeff.shape[0]
        C = tensor_to_matrix(np.moveaxis(coeff, 0, 4))  # (n2, n2, Ba, *sp)
        C = np.moveaxis(C, 2, 0).reshape(Ba, n * n, n * n, -1)
        self.C = np.ascontiguousarray(C)
        self.Ba = Ba
        self.symmetric = bool(np.allclose(C, np.swapaxes(C, 1, 2), rtol=1e-13, atol=1e-14))
        diag = np.einsum("arrp->ap", C) / (n * n)
        self.cref = diag.mean(axis=1)

    def apply_unprojected(self, U):
        sp, n = self.sp, self.n
        Ba, Bg = U.shape[:2]
        g = sp.inv(sp.grad_hat(U))  # (Ba, Bg, n(beta), n(j), *sp)
        g = g.reshape(Ba, Bg, n * n, -1)
        s = kernels.pointwise_matvec(self.C, g)
        s = s.reshape((Ba, Bg, n, n) + sp.grid.shape)
        return -sp.div_hat(sp.fwd(s))

    def apply(self, U):
        return self.sp.leray_hat(self.apply_unprojected(U))

    def precondition(self, R):
        c = self.cref.reshape((self.Ba, 1, 1) + (1,) * self.n)
        return R * self.sp.inv_k2 / (4 * np.pi ** 2 * c)


def _pcg(op, B, rtol, maxiter, w):
    """Batched PCG; each member has its own step sizes and stops on its own."""
    def dot(X, Y):
        return np.sum(w * (X.conj() * Y).real, axis=tuple(range(2, X.ndim)))

    n_ax = B.ndim - 2
    exp = (Ellipsis,) + (None,) * n_ax
    U = np.zeros_like(B)
    bnorm = np.sqrt(dot(B, B))
    active = _live(bnorm)
    B = np.where(active[exp], B, 0)
    R = B.copy()
    Z = op.precondition(R)
    P = Z.copy()
    rz = dot(R, Z)
    rnorm = bnorm.copy()
    it = 0
    while np.any(active) and it < maxiter:
        AP = op.apply(P)
        pap = dot(P, AP)
        alpha = np.where(active & (pap != 0), rz / np.where(pap != 0, pap, 1), 0.0)
        U += alpha[exp] * P
        R -= alpha[exp] * AP
        rnorm = np.sqrt(dot(R, R))
        it += 1
        done = active & (rnorm <= rtol * bnorm)
        active = active & ~done
        Z = op.precondition(R)
        rz_new = dot(R, Z)
        beta = np.where(active & (rz != 0), rz_new / np.where(rz != 0, rz, 1), 0.0)
        P = np.where(active[exp], Z + beta[exp] * P, P)
        rz = np.where(active, rz_new, rz)
    return U, it


def _gmres(op, B, rtol, maxiter, w):
    sp = op.sp
    n = op.n
    shape_hat = (1, 1, n) + sp.hshape
    shape_real = (n,) + sp.grid.shape
    Ba, Bg = B.shape[:2]
    U = np.zeros_like(B)
    iters = 0
    live = _live(np.sqrt(np.sum(w * np.abs(B) ** 2, axis=tuple(range(2, B.ndim)))))
    for a in range(Ba):
        sub = _SliceOp(op, a)

        def mv(x):
            X = sp.fwd(x.reshape(shape_real)).reshape(shape_hat)
            return sp.inv(sub.apply(X)[0, 0]).ravel()

        def prec(x):
            X = sp.fwd(x.reshape(shape_real)).reshape(shape_hat)
            return sp.inv(sub.precondition(X)[0, 0]).ravel()

        size = n * sp.grid.size
        A = spla.LinearOperator((size, size), matvec=mv, dtype=float)
        M = spla.LinearOperator((size, size), matvec=prec, dtype=float)
        for b in range(Bg):
            rhs = sp.inv(B[a, b]).ravel()
            bn = np.linalg.norm(rhs)
            if not live[a, b]:
                continue
            x = np.zeros_like(rhs)
            count = [0]

            def cb(_):
                count[0] += 1
            while count[0] < maxiter:
                x, _info = spla.gmres(A, rhs, x0=x, rtol=rtol * 0.1, restart=min(60, maxiter),
                                      maxiter=1, M=M, callback=cb, callback_type="pr_norm")
                if np.linalg.norm(rhs - A @ x) <= rtol * bn:
                    break
            iters = max(iters, count[0])
            U[a, b] = sp.fwd(x.reshape(shape_real))
    return U, iters


class _SliceOp(_Operator):
    def __init__(self, parent, a):  # noqa: D401 - lightweight view
        self.sp, self.n = parent.sp, parent.n
        self.C = np.ascontiguousarray(parent.C[a:a + 1])
        self.Ba = 1
        self.symmetric = parent.symmetric
        self.cref = parent.cref[a:a + 1]


def _direct_constant(a, F, sp):
    """Exact per-mode solve for a constant tensor; F has shape (..., n, *h)."""
    n = sp.n
    k = sp.kvec()
    kf = k.reshape(n, -1)
    modes = kf.shape[1]
    Mk = 4 * np.pi ** 2 * np.einsum("ijab,im,jm->mab", a, kf, kf)
    S = np.zeros((modes, n + 1, n + 1), dtype=complex)
    S[:, :n, :n] = Mk
    S[:, :n, n] = 2j * np.pi * kf.T
    S[:, n, :n] = 2j * np.pi * kf.T
    good = (sp.keep.ravel()) & (sp.k2.ravel() > 0)
    lead = F.shape[:-n - 1]
    Ff = F.reshape((-1, n, modes))
    rhs = np.zeros((modes, n + 1, Ff.shape[0]), dtype=complex)
    rhs[:, :n, :] = np.moveaxis(Ff, (0, 1, 2), (2, 1, 0))
    sol = np.zeros_like(rhs)
    sol[good] = np.linalg.solve(S[good], rhs[good])
    U = np.moveaxis(sol[:, :n, :], (2, 1, 0), (0, 1, 2)).reshape(lead + (n,) + sp.hshape)
    Pr = np.moveaxis(sol[:, n, :], 1, 0).reshape(lead + sp.hshape)
    return U, Pr


def _as_batched(coeff, n, grid_shape):
    coeff = np.asarray(coeff, dtype=float)
    if coeff.shape == (n,) * 4:
        return coeff, "constant"
    if coeff.shape == (n,) * 4 + grid_shape:
        return coeff[None], "single"
    if coeff.ndim == 5 + len(grid_shape) and coeff.shape[1:] == (n,) * 4 + grid_shape:
        return coeff, "batched"
    raise ValueError(f"coefficient shape {coeff.shape} does not fit the grid")


def stokes_periodic_solve(coeff, grid: PeriodicGrid, flux=None, force=None, div=None,
                          rtol=DEFAULT_RTOL, maxiter=None, spectral=None, mean_tol=1e-10):
    """Solve -div(a grad u) + grad p = f - div G, div u = h on the torus.

    ``coeff`` is a constant tensor (n,n,n,n), a field (n,n,n,n,*grid) or a
    batch (Ba,n,n,n,n,*grid). With a batch, right-hand sides carry leading
    dims (Ba, Bg). ``flux`` is G[..., alpha, i], ``force`` f[..., alpha],
    ``div`` h[...]. Returns a :class:`CellSolution`.
    """
    n = grid.dim
    gs = grid.shape
    sp = spectral or Spectral(grid)
    C, kind = _as_batched(coeff, n, gs)
    if maxiter is None:
        maxiter = 10 * grid.points

    lead = None
    for arr, extra in ((flux, 2), (force, 1), (div, 0)):
        if arr is not None:
            lead = np.shape(arr)[:np.ndim(arr) - extra - n]
    if lead is None:
        raise ValueError("no right-hand side given")

    F = np.zeros(lead + (n,) + sp.hshape, dtype=complex)
    if force is not None:
        force = np.asarray(force, dtype=float)
        m = np.abs(force.mean(axis=sp.axes)).max() if force.size else 0.0
        scale = max(1.0, np.abs(force).max())
        if m > mean_tol * scale:
            raise NonZeroMean(f"forcing has mean {m:.3e}")
        F += sp.fwd(force)
    if flux is not None:
        F -= sp.div_hat(sp.fwd(np.asarray(flux, dtype=float)))
    F *= sp.keep
    Uh = None
    if div is not None:
        div = np.asarray(div, dtype=float)
        m = np.abs(div.mean(axis=sp.axes)).max() if div.size else 0.0
        if m > mean_tol * max(1.0, np.abs(div).max()):
            raise NonZeroMean(f"divergence data has mean {m:.3e}")
        phi = sp.inv_laplacian_hat(sp.fwd(div))
        Uh = sp.grad_hat(phi)  # (..., n, *h)

    if kind == "constant":
        if Uh is not None:
            Mk = _const_apply(C, Uh, sp)
            F = F - Mk
        U, Pr = _direct_constant(C, F, sp)
        if Uh is not None:
            U = U + Uh
        u = sp.inv(U)
        p = sp.inv(Pr)
        res = np.zeros(lead)
        return CellSolution(u, p, res, 0, "direct")

    op = _Operator(C, sp)
    Ba = op.Ba
    if kind == "batched":
        if len(lead) == 1:
            F = F[:, None]
            Uh = None if Uh is None else Uh[:, None]
        elif len(lead) != 2 or lead[0] != Ba:
            raise ValueError("batched coefficient needs right-hand sides with leading (Ba, Bg)")
    else:
        F = F.reshape((1, -1, n) + sp.hshape)
        if Uh is not None:
            Uh = Uh.reshape((1, -1, n) + sp.hshape)
    if Uh is not None:
        F = F - op.apply_unprojected(Uh) * sp.keep
    B = sp.leray_hat(F)
    w = _weights(sp)
    if op.symmetric:
        U, it = _pcg(op, B, rtol, maxiter, w)
        method = "pcg"
    else:
        U, it = _gmres(op, B, rtol, maxiter, w)
        method = "gmres"
    Rfull = (F - op.apply_unprojected(U)) * sp.keep
    Rproj = sp.leray_hat(Rfull)

    def wnorm(X):
        return np.sqrt(np.sum(w * np.abs(X) ** 2, axis=tuple(range(2, X.ndim))))
    bn = wnorm(B)
    live = _live(bn)
    res = np.where(live, wnorm(Rproj) / np.where(live, bn, 1), 0.0)
    if np.any(res > rtol * 1.0001):
        raise NoConvergence(f"cell solve stopped at relative residual {res.max():.3e} "
                            f"after {it} iterations (budget {maxiter})",
                            residual=float(res.max()), iterations=it)
    kdot = 0
    for d, kd in enumerate(sp.k):
        kdot = kdot + kd * Rfull[(Ellipsis, d) + (slice(None),) * n]
    Pr = -1j * kdot * sp.inv_k2 / (2 * np.pi)
    if Uh is not None:
        U = U + Uh
    u = sp.inv(U)
    p = sp.inv(Pr)
    if kind == "batched":
        u = u.reshape(lead + u.shape[2:])
        p = p.reshape(lead + p.shape[2:])
        res = res.reshape(lead)
    else:
        u = u.reshape(lead + u.shape[2:])
        p = p.reshape(lead + p.shape[2:])
        res = res.reshape(lead)
    return CellSolution(u, p, res, it, method)


def _const_apply(a, U, sp):
    """Unprojected L applied to half spectra for a constant tensor."""
    n = sp.n
    G = sp.grad_hat(U)  # (..., beta, j, *h)
    lead = G.shape[:-n - 2]
    Gf = G.reshape((-1, n, n, int(np.prod(sp.hshape))))
    S = np.einsum("ijab,lbjh->laih", a, Gf).reshape(lead + (n, n) + sp.hshape)
    return -sp.div_hat(S)


def stokes_cell_solve(coeff, rhs_divergence_form, grid, **kw):
    """Cell problem with right-hand side -div G; returns (velocity, pressure)."""
    sol = stokes_periodic_solve(coeff, grid, flux=rhs_divergence_form, **kw)
    return sol.velocity, sol.pressure


def solve_stokes_auxiliary(I, grid: PeriodicGrid, spectral=None, mean_tol=1e-10):
    """Delta f + grad q = I, div f = 0 for mean-zero I[..., alpha, *grid].

    Returns (f, q, nyquist_remainder) where the remainder is the part of I
    carried by truncated modes, which the solution cannot represent.
    """
    sp = spectral or Spectral(grid)
    n = grid.dim
    I = np.asarray(I, dtype=float)
    scale = max(np.abs(I).max(), 1e-300)
    m = np.abs(I.mean(axis=sp.axes)).max()
    if m > mean_tol * max(scale, 1.0):
        raise NonZeroMean(f"auxiliary data has mean {m:.3e}")
    Ih = sp.fwd(I)
    kdot = 0
    for d, kd in enumerate(sp.k):
        kdot = kdot + kd * Ih[(Ellipsis, d) + (slice(None),) * n]
    q = sp.inv(-1j * kdot * sp.inv_k2 / (2 * np.pi))
    f = sp.inv(-sp.leray_hat(Ih) * sp.inv_k2[None] / (4 * np.pi ** 2))
    rem = sp.inv(Ih * ~sp.keep)
    return f, q, rem


# corrector families -------------------------------------------------------

@dataclass
class FastCorrectorFamily:
    """chi[j, gamma, beta, *Y, *Z] and pi[j, beta, *Y, *Z]."""

    grid_y: PeriodicGrid
    grid_z: PeriodicGrid
    chi: np.ndarray
    pi: np.ndarray
    residual: float
    iterations: int
    _dz: np.ndarray = field(default=None, repr=False)

    def dz_chi(self):
        """d_{z_k} chi_j^{gamma beta} as [j, gamma, beta, k, *Y, *Z]."""
        if self._dz is None:
            n = self.grid_z.dim
            self._dz = np.moveaxis(Spectral(self.grid_z).grad(self.chi), -n - 1, 3)
        return self._dz


@dataclass
class SlowCorrectorFamily:
    """chi[j, gamma, beta, *Y] and pi[j, beta, *Y]."""

    grid_y: PeriodicGrid
    chi: np.ndarray
    pi: np.ndarray
    residual: float
    iterations: int

    def dy_chi(self):
        return Spectral(self.grid_y).grad(self.chi)


@dataclass
class MesoscaleCoefficient:
    grid_y: PeriodicGrid
    a2: np.ndarray
    ellipticity: object


def _fast_chunk(a_chunk, grid_z, rtol, maxiter):
    """a_chunk: (Bc, n, n, n, n, *Z). Returns chi (Bc, j, gamma, beta, *Z), pi."""
    n = grid_z.dim
    Bc = a_chunk.shape[0]
    zs = grid_z.shape
    # flux for right-hand side (j, beta): G[alpha, i] = a[i, j, alpha, beta]
    G = np.moveaxis(a_chunk, (1, 2, 3, 4), (4, 1, 3, 2))  # (Bc, j, beta, alpha, i, *Z)
    G = np.ascontiguousarray(G).reshape((Bc, n * n, n, n) + zs)
    sol = stokes_periodic_solve(a_chunk, grid_z, flux=G, rtol=rtol, maxiter=maxiter)
    u = sol.velocity.reshape((Bc, n, n, n) + zs)  # (Bc, j, beta, gamma)
    chi = np.swapaxes(u, 2, 3)  # (Bc, j, gamma, beta)
    pi = sol.pressure.reshape((Bc, n, n) + zs)
    return chi, pi, float(sol.residual.max()), sol.iterations


def solve_fast_family(coef: TwoScaleCoefficient, rtol=DEFAULT_RTOL, maxiter=None,
                      workers=1, chunk=64):
    """All fast correctors chi(y, .) for every y node, batched over y."""
    n = coef.dim
    ys, zs = coef.grid_y.shape, coef.grid_z.shape
    ny = int(np.prod(ys))
    A = coef.samples.reshape((n,) * 4 + (ny,) + zs)
    A = np.moveaxis(A, 4, 0)
    starts = list(range(0, ny, chunk))

    def job(s):
        return _fast_chunk(np.ascontiguousarray(A[s:s + chunk]), coef.grid_z, rtol, maxiter)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    chi = np.concatenate([p[0] for p in parts])
    pi = np.concatenate([p[1] for p in parts])
    chi = np.moveaxis(chi, 0, 3).reshape((n, n, n) + ys + zs)
    pi = np.moveaxis(pi, 0, 2).reshape((n, n) + ys + zs)
    return FastCorrectorFamily(coef.grid_y, coef.grid_z, chi, pi,
                               max(p[2] for p in parts), max(p[3] for p in parts))


def solve_fast_cell(coef: TwoScaleCoefficient, y_index, rtol=DEFAULT_RTOL, maxiter=None):
    """Fast correctors at a single y node (multi-index into the Y grid)."""
    n = coef.dim
    idx = (slice(None),) * 4 + tuple(y_index)
    a = coef.samples[idx]
    chi, pi, res, it = _fast_chunk(a[None], coef.grid_z, rtol, maxiter)
    return chi[0], pi[0], res


def assemble_mesoscale(coef: TwoScaleCoefficient, fast: FastCorrectorFamily, n_xi=64, seed=0,
                       check=True):
    """a2_ij^{ab}(y) = mean_Z(a_ij^{ab} - a_ik^{ag} d_zk chi_j^{gb})."""
    n = coef.dim
    zax = tuple(range(-n, 0))
    dz = fast.dz_chi()
    corr = _contract_a_dchi(coef.samples, dz, n)
    a2 = (coef.samples - corr).mean(axis=zax)
    rep = check_ellipticity(a2, coef.spec.mu, n_xi=n_xi, seed=seed, raise_on_fail=check)
    return MesoscaleCoefficient(coef.grid_y, a2, rep)


def _contract_a_dchi(a, dchi, n):
    """sum_{k, gamma} a[i, k, alpha, gamma] dchi[j, gamma, beta, k] -> [i, j, alpha, beta]."""
    sh = np.broadcast_shapes(a.shape[4:], dchi.shape[4:])
    out = np.zeros((n,) * 4 + sh)
    for i in range(n):
        for al in range(n):
            for k in range(n):
                for g in range(n):
                    aa = a[i, k, al, g]
                    out[i, :, al, :] += aa * dchi[:, g, :, k]
    return out


def solve_slow_family(meso: MesoscaleCoefficient, rtol=DEFAULT_RTOL, maxiter=None):
    """Slow correctors chi_s(y) for the mesoscale coefficient a2."""
    grid = meso.grid_y
    n = grid.dim
    ys = grid.shape
    G = np.moveaxis(meso.a2, (0, 1, 2, 3), (3, 0, 2, 1))  # (j, beta, alpha, i)
    G = np.ascontiguousarray(G).reshape((n * n, n, n) + ys)
    sol = stokes_periodic_solve(meso.a2, grid, flux=G, rtol=rtol, maxiter=maxiter)
    u = sol.velocity.reshape((n, n, n) + ys)
    chi = np.swapaxes(u, 1, 2)
    pi = sol.pressure.reshape((n, n) + ys)
    return SlowCorrectorFamily(grid, chi, pi, float(sol.residual.max()), sol.iterations)
