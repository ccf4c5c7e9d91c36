"""Fine-scale and homogenized Stokes solves on the torus or the unit square.

Torus: Fourier collocation through :mod:`reistokes.cellsolve` on the macro
grid, coefficient a(x/eps, x/eps^2) evaluated analytically at the nodes.
Square: staggered (MAC) finite differences with Dirichlet data, assembled
sparse and factorized directly.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .cellsolve import DEFAULT_RTOL, stokes_periodic_solve
from .errors import IncompatibleData, NonZeroMean, ResolutionInsufficient
from .fields import CoefficientSpec, MacroGrid, identity_tensor
from .spectral import Spectral


@dataclass
class ModeTerm:
    """amplitude * cos(2 pi k.x + phase) in one component."""

    component: int
    k: tuple
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        self.k = tuple(float(v) for v in self.k)

    def value(self, x):
        theta = sum(self.k[d] * x[d] for d in range(len(self.k)))
        return self.amplitude * np.cos(2 * np.pi * theta + self.phase)


def _eval_terms(terms, x, ncomp):
    out = np.zeros((ncomp,) + x.shape[1:])
    for t in terms:
        out[t.component] += t.value(x)
    return out


@dataclass
class DomainSpec:
    kind: str = "torus"
    dim: int = 2
    forcing: list = field(default_factory=list)
    divergence: list = field(default_factory=list)
    boundary: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("torus", "square"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "torus":
            for t in self.forcing + self.divergence:
                if any(abs(k - round(k)) > 1e-12 for k in t.k):
                    raise IncompatibleData("torus data needs integer wavevectors")
            fm = self._mean(self.forcing)
            if np.abs(fm).max() > 1e-12:
                raise NonZeroMean(f"torus forcing has mean {fm}")
            hm = self._mean(self.divergence)
            if abs(hm) > 1e-12:
                raise IncompatibleData(f"torus divergence data has mean {hm:.3e}")
        else:
            gap = self.compatibility_gap()
            if abs(gap) > 1e-10:
                raise IncompatibleData(f"int h - int g.n = {gap:.3e}")

    def _mean(self, terms):
        m = np.zeros(self.dim)
        for t in terms:
            if all(k == 0 for k in t.k):
                m[t.component] += t.amplitude * np.cos(t.phase)
        return m if terms is self.forcing else float(m.sum())

    def f(self, x):
        return _eval_terms(self.forcing, x, self.dim)

    def h(self, x):
        return _eval_terms(self.divergence, x, 1)[0]

    def g(self, x):
        return _eval_terms(self.boundary, x, self.dim)

    def compatibility_gap(self, order=64):
        """int_Omega h - int_dOmega g.n by Gauss-Legendre quadrature."""
        t, w = np.polynomial.legendre.leggauss(order)
        t, w = 0.5 * (t + 1), 0.5 * w
        X = np.stack(np.meshgrid(t, t, indexing="ij"))
        W = np.outer(w, w)
        vol = float(np.sum(W * self.h(X)))
        flux = 0.0
        zero, one = np.zeros_like(t), np.ones_like(t)
        flux += np.sum(w * self.g(np.stack([one, t]))[0]) - np.sum(w * self.g(np.stack([zero, t]))[0])
        flux += np.sum(w * self.g(np.stack([t, one]))[1]) - np.sum(w * self.g(np.stack([t, zero]))[1])
        return vol - float(flux)


def macro_points(eps, macro_min=64):
    """Smallest power of two M >= macro_min with 1/M <= eps^2 / 8."""
    M = 4
    while M < macro_min or 1.0 / M > eps ** 2 / 8 * (1 + 1e-12):
        M *= 2
    return M


def check_resolution(M, eps):
    if 1.0 / M > eps ** 2 / 8 * (1 + 1e-12):
        raise ResolutionInsufficient(
            f"spacing 1/{M} exceeds eps^2/8 = {eps ** 2 / 8:.4g} at eps={eps:.6g}")


@dataclass
class StokesSolution:
    macro: MacroGrid
    u: np.ndarray
    grad_u: np.ndarray
    p: np.ndarray
    residual: float
    div_residual: float
    iterations: int = 0
    energy_ratio: float = float("nan")
    extras: dict = field(default_factory=dict)


def _torus_check_eps(eps):
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9:
        raise IncompatibleData(f"on the torus 1/eps must be an integer, got eps={eps:.6g}")


def _energy(sol_u_grad, p, f, h, macro, g_norm=0.0, torus=True):
    num = np.sqrt(macro.integrate((sol_u_grad ** 2).sum(axis=(0, 1)))) + \
        np.sqrt(macro.integrate(p ** 2))
    if torus:
        sp = Spectral(macro.periodic_grid())
        fh = sp.fwd(f)
        w = np.full(sp.hshape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        fneg = np.sqrt(np.sum(w * np.abs(fh) ** 2 * sp.inv_k2 / (4 * np.pi ** 2))) / macro.periodic_grid().size
    else:
        fneg = np.sqrt(macro.integrate((f ** 2).sum(axis=0)))
    den = fneg + np.sqrt(macro.integrate(h ** 2)) + g_norm
    return float(num / den) if den > 0 else float("nan")


def _solve_torus(coeff, macro, domain, rtol, maxiter):
    x = macro.coords()
    f = domain.f(x)
    h = domain.h(x)
    grid = macro.periodic_grid()
    sp = Spectral(grid)
    sol = stokes_periodic_solve(coeff, grid, force=f, div=h if domain.divergence else None,
                                rtol=rtol, maxiter=maxiter, spectral=sp)
    grad = sp.grad(sol.velocity)
    divres = float(np.abs(sp.div(sol.velocity) - sp.truncate(h)).max())
    res = float(np.max(sol.residual)) if np.size(sol.residual) else 0.0
    return StokesSolution(macro, sol.velocity, grad, sol.pressure, res, divres, sol.iterations,
                          _energy(grad, sol.pressure, f, h, macro))


def solve_reiterated(spec: CoefficientSpec, eps, domain: DomainSpec, macro_min=64, points=None,
                     rtol=DEFAULT_RTOL, maxiter=None):
    """u_eps, p_eps for the coefficient a(x/eps, x/eps^2)."""
    M = points or macro_points(eps, macro_min)
    check_resolution(M, eps)
    macro = MacroGrid(domain.kind, M, domain.dim)
    if domain.kind == "torus":
        _torus_check_eps(eps)
        if not (spec.depends_on_y or spec.depends_on_z):
            # constant tensor: same direct path as the homogenized solve
            z = np.zeros((spec.dim, 1))
            return _solve_torus(spec.evaluate(z, z)[..., 0], macro, domain, rtol, maxiter)
        a = spec.evaluate_macro(macro.coords(), eps)
        return _solve_torus(a, macro, domain, rtol, maxiter)
    return solve_square(lambda x: spec.evaluate_macro(x, eps), macro, domain)


def solve_homogenized(a_hat, domain: DomainSpec, points, rtol=DEFAULT_RTOL):
    """u0, p0 for the constant effective tensor on the same macro grid."""
    macro = MacroGrid(domain.kind, points, domain.dim)
    if domain.kind == "torus":
        return _solve_torus(np.asarray(a_hat, float), macro, domain, rtol, None)
    return solve_square(lambda x: np.broadcast_to(
        np.asarray(a_hat, float).reshape(a_hat.shape + (1,) * (x.ndim - 1)),
        a_hat.shape + x.shape[1:]), macro, domain)


# MAC discretization on the unit square -----------------------------------

def _coo(rows, cols, vals, shape):
    return sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=shape)


def solve_square(coef_at, macro: MacroGrid, domain: DomainSpec):
    """Staggered-grid solve with u1 on x-faces, u2 on y-faces, p at centres.

    ``coef_at(x)`` returns a[i, j, alpha, beta] at points x of shape (2, ...).
    A Lagrange multiplier on the continuity rows absorbs the discrete
    compatibility defect; the pressure mean is fixed to zero.
    """
    M = macro.points
    h = macro.spacing
    c = (np.arange(M) + 0.5) * h
    v = np.arange(M + 1) * h
    # face and node coordinates
    X1 = np.stack(np.meshgrid(v, c, indexing="ij"))   # u1 faces (M+1, M)
    X2 = np.stack(np.meshgrid(c, v, indexing="ij"))   # u2 faces (M, M+1)
    XC = np.stack(np.meshgrid(c, c, indexing="ij"))
    XV = np.stack(np.meshgrid(v, v, indexing="ij"))
    nF1, nF2 = (M + 1) * M, M * (M + 1)
    nC, nV = M * M, (M + 1) ** 2

    # unknown numbering: interior u1, interior u2, p
    id1 = -np.ones((M + 1, M), dtype=np.int64)
    id1[1:M] = np.arange((M - 1) * M).reshape(M - 1, M)
    N1 = (M - 1) * M
    id2 = -np.ones((M, M + 1), dtype=np.int64)
    id2[:, 1:M] = N1 + np.arange(M * (M - 1)).reshape(M, M - 1)
    N2 = M * (M - 1)
    idp = N1 + N2 + np.arange(nC).reshape(M, M)
    Nx = N1 + N2 + nC

    g1 = domain.g(X1)[0]
    g2 = domain.g(X2)[1]
    # face values F = S x + b
    def face_map(ids, gvals, nF):
        flat = ids.ravel()
        inner = flat >= 0
        S = sps.csr_matrix((np.ones(inner.sum()), (np.nonzero(inner)[0], flat[inner])),
                           shape=(nF, Nx))
        b = np.where(inner, 0.0, gvals.ravel())
        return S, b
    S1, b1 = face_map(id1, g1, nF1)
    S2, b2 = face_map(id2, g2, nF2)

    def lin(iC, jF, wts, nrow, ncol):
        return sps.csr_matrix((wts, (iC, jF)), shape=(nrow, ncol))

    I, J = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    cidx = (I * M + J).ravel()
    # centre gradients of the normal components
    f1 = lambda i, j: (i * M + j).ravel()          # noqa: E731  u1 face (i, j), i<=M
    f2 = lambda i, j: (i * (M + 1) + j).ravel()    # noqa: E731  u2 face (i, j), j<=M
    D11c = lin(np.r_[cidx, cidx], np.r_[f1(I + 1, J), f1(I, J)],
               np.r_[np.full(nC, 1 / h), np.full(nC, -1 / h)], nC, nF1)
    D22c = lin(np.r_[cidx, cidx], np.r_[f2(I, J + 1), f2(I, J)],
               np.r_[np.full(nC, 1 / h), np.full(nC, -1 / h)], nC, nF2)
    # vertex gradients of the tangential components, with boundary data
    IV, JV = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="ij")
    vidx = (IV * (M + 1) + JV)
    rows, cols, vals = [], [], []
    bv21 = np.zeros((M + 1, M + 1))
    mid = (JV >= 1) & (JV <= M - 1)
    rows += [vidx[mid], vidx[mid]]
    cols += [f1(IV[mid], JV[mid]), f1(IV[mid], JV[mid] - 1)]
    vals += [np.full(mid.sum(), 1 / h), np.full(mid.sum(), -1 / h)]
    bot, top = JV == 0, JV == M
    rows += [vidx[bot], vidx[top]]
    cols += [f1(IV[bot], JV[bot]), f1(IV[top], JV[top] - 1)]
    vals += [np.full(bot.sum(), 2 / h), np.full(top.sum(), -2 / h)]
    gv = domain.g(XV)
    bv21[bot] = -2 / h * gv[0][bot]
    bv21[top] = 2 / h * gv[0][top]
    D21v = _coo(rows, cols, vals, (nV, nF1))
    rows, cols, vals = [], [], []
    bv12 = np.zeros((M + 1, M + 1))
    mid = (IV >= 1) & (IV <= M - 1)
    rows += [vidx[mid], vidx[mid]]
    cols += [f2(IV[mid], JV[mid]), f2(IV[mid] - 1, JV[mid])]
    vals += [np.full(mid.sum(), 1 / h), np.full(mid.sum(), -1 / h)]
    lef, rig = IV == 0, IV == M
    rows += [vidx[lef], vidx[rig]]
    cols += [f2(IV[lef], JV[lef]), f2(IV[rig] - 1, JV[rig])]
    vals += [np.full(lef.sum(), 2 / h), np.full(rig.sum(), -2 / h)]
    bv12[lef] = -2 / h * gv[1][lef]
    bv12[rig] = 2 / h * gv[1][rig]
    D12v = _coo(rows, cols, vals, (nV, nF2))
    # averaging between centres and vertices
    rows, cols, vals = [], [], []
    for di in (0, 1):
        for dj in (0, 1):
            rows.append(cidx)
            cols.append(((I + di) * (M + 1) + (J + dj)).ravel())
            vals.append(np.full(nC, 0.25))
    Avc = _coo(rows, cols, vals, (nC, nV))
    cnt = np.asarray(Avc.T.sum(axis=1)).ravel() * 4
    Acv = sps.diags(1.0 / cnt) @ (Avc.T * 4)

    # gradient components as affine maps of x: G = A x + b, layout [beta, j]
    def aff(D, S, b, extra=None):
        A = D @ S
        bb = D @ b
        if extra is not None:
            bb = bb + extra.ravel()
        return A.tocsr(), bb
    Gc, Gv = {}, {}
    Gc[(0, 0)] = aff(D11c, S1, b1)
    Gc[(1, 1)] = aff(D22c, S2, b2)
    Gv[(0, 1)] = aff(D21v, S1, b1, bv21)
    Gv[(1, 0)] = aff(D12v, S2, b2, bv12)
    Gv[(0, 0)] = (Acv @ Gc[(0, 0)][0], Acv @ Gc[(0, 0)][1])
    Gv[(1, 1)] = (Acv @ Gc[(1, 1)][0], Acv @ Gc[(1, 1)][1])
    Gc[(0, 1)] = (Avc @ Gv[(0, 1)][0], Avc @ Gv[(0, 1)][1])
    Gc[(1, 0)] = (Avc @ Gv[(1, 0)][0], Avc @ Gv[(1, 0)][1])

    ac = coef_at(XC).reshape(2, 2, 2, 2, nC)
    av = coef_at(XV).reshape(2, 2, 2, 2, nV)

    def flux(a, G, al, i):
        A = None
        b = 0
        for be in range(2):
            for j in range(2):
                w = a[i, j, al, be]
                if not np.any(w):
                    continue
                term = sps.diags(w) @ G[(be, j)][0]
                A = term if A is None else A + term
                b = b + w * G[(be, j)][1]
        if A is None:
            A = sps.csr_matrix((G[(0, 0)][0].shape[0], Nx))
            b = np.zeros(G[(0, 0)][0].shape[0])
        return A.tocsr(), b
    s11c = flux(ac, Gc, 0, 0)
    s22c = flux(ac, Gc, 1, 1)
    s21v = flux(av, Gv, 0, 1)   # sigma_2^1 at vertices
    s12v = flux(av, Gv, 1, 0)   # sigma_1^2 at vertices

    # momentum alpha = 1 on interior x-faces
    Ii, Jj = np.meshgrid(np.arange(1, M), np.arange(M), indexing="ij")
    r1 = np.arange(N1)
    cR, cL = (Ii * M + Jj).ravel(), ((Ii - 1) * M + Jj).ravel()
    vT, vB = (Ii * (M + 1) + Jj + 1).ravel(), (Ii * (M + 1) + Jj).ravel()
    A1 = (-(s11c[0][cR] - s11c[0][cL]) - (s21v[0][vT] - s21v[0][vB])) / h
    b1m = (-(s11c[1][cR] - s11c[1][cL]) - (s21v[1][vT] - s21v[1][vB])) / h
    P1 = lin(np.r_[r1, r1], np.r_[idp.ravel()[cR], idp.ravel()[cL]],
             np.r_[np.full(N1, 1 / h), np.full(N1, -1 / h)], N1, Nx)
    F1 = domain.f(X1[:, 1:M])[0].ravel()
    # momentum alpha = 2 on interior y-faces
    Ii, Jj = np.meshgrid(np.arange(M), np.arange(1, M), indexing="ij")
    r2 = np.arange(N2)
    cT, cB = (Ii * M + Jj).ravel(), (Ii * M + Jj - 1).ravel()
    vR, vL = ((Ii + 1) * (M + 1) + Jj).ravel(), (Ii * (M + 1) + Jj).ravel()
    A2 = (-(s12v[0][vR] - s12v[0][vL]) - (s22c[0][cT] - s22c[0][cB])) / h
    b2m = (-(s12v[1][vR] - s12v[1][vL]) - (s22c[1][cT] - s22c[1][cB])) / h
    P2 = lin(np.r_[r2, r2], np.r_[idp.ravel()[cT], idp.ravel()[cB]],
             np.r_[np.full(N2, 1 / h), np.full(N2, -1 / h)], N2, Nx)
    F2 = domain.f(X2[:, :, 1:M])[1].ravel()
    # continuity at centres
    Dv = Gc[(0, 0)][0] + Gc[(1, 1)][0]
    bd = Gc[(0, 0)][1] + Gc[(1, 1)][1]
    hc = domain.h(XC).ravel()

    K = sps.vstack([A1 + P1, A2 + P2, Dv]).tocsr()
    rhs = np.concatenate([F1 - b1m, F2 - b2m, hc - bd])
    lam_col = sps.csr_matrix(np.r_[np.zeros(N1 + N2), np.ones(nC)].reshape(-1, 1))
    mean_row = sps.csr_matrix(np.r_[np.zeros(N1 + N2), np.ones(nC) / nC, 0.0].reshape(1, -1))
    K = sps.vstack([sps.hstack([K, lam_col]), mean_row]).tocsc()
    rhs = np.r_[rhs, 0.0]
    lu = spla.splu(K, permc_spec="COLAMD")
    xs = lu.solve(rhs)
    res = float(np.abs(K @ xs - rhs).max() / max(np.abs(rhs).max(), 1e-300))
    x, lam = xs[:Nx], xs[Nx]

    F1v = (S1 @ x + b1).reshape(M + 1, M)
    F2v = (S2 @ x + b2).reshape(M, M + 1)
    u = np.stack([0.5 * (F1v[1:] + F1v[:-1]), 0.5 * (F2v[:, 1:] + F2v[:, :-1])])
    grad = np.empty((2, 2, M, M))
    for be in range(2):
        for j in range(2):
            A_, b_ = Gc[(be, j)]
            grad[be, j] = (A_ @ x + b_).reshape(M, M)
    p = x[N1 + N2:].reshape(M, M)
    divres = float(np.abs(grad[0, 0] + grad[1, 1] - hc.reshape(M, M)).max())
    f_c = domain.f(XC)
    gb = np.sqrt(float(np.sum(g1[[0, -1]] ** 2) + np.sum(g2[:, [0, -1]] ** 2)) * h)
    sol = StokesSolution(macro, u, grad, p, res, divres, 0,
                         _energy(grad, p, f_c, hc.reshape(M, M), macro, gb, torus=False))
    sol.extras.update(u1_faces=F1v, u2_faces=F2v, compat_multiplier=float(lam))
    return sol


# norms ---------------------------------------------------------------------

def norms(values, macro: MacroGrid, grad=None, mask=None):
    """L2, H1 seminorm and full H1 norm of a field with component axes first.

    ``mask`` restricts the integrals (e.g. to Omega minus Sigma_r).
    """
    values = np.asarray(values, float)
    if grad is None:
        grad = macro.gradient(values)
    n = macro.dim
    sq = values ** 2
    gsq = grad ** 2
    while sq.ndim > n:
        sq = sq.sum(axis=0)
    while gsq.ndim > n:
        gsq = gsq.sum(axis=0)
    l2 = np.sqrt(macro.integrate(sq, mask))
    h1s = np.sqrt(macro.integrate(gsq, mask))
    return {"L2": l2, "H1semi": h1s, "H1": float(np.hypot(l2, h1s))}


def boundary_layer_norm(values, macro: MacroGrid, r):
    """L2 norm over the strip Omega minus Sigma_r (distance to the boundary <= r)."""
    mask = macro.dist_to_boundary() <= r
    return norms(values, macro, grad=np.zeros((1,) + macro.shape), mask=mask)["L2"]


def isotropic(n=2):
    return identity_tensor(n)
