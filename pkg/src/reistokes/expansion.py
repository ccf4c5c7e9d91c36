"""First-order two-scale expansion and its residual decomposition.

All products g(x/eps, x/eps^2) * G(x) are formed nodewise on the macro grid,
where G = psi S_eps(grad u0) and cell fields are evaluated by trigonometric
interpolation. Macro derivatives of cell fields use the chain rule
d/dx = eps^-1 d/dy + eps^-2 d/dz.

Index layouts on the macro grid (components first, grid axes last):
G[gamma, j] = G_j^gamma, dG[gamma, j, h] = d_h G_j^gamma,
chi[j, beta, gamma] = chi_j^{beta gamma}, dchi[j, beta, gamma, h].
"""
from dataclasses import dataclass, field

import numpy as np

from .effective import CellModel
from .fields import MacroGrid
from .finesolve import StokesSolution, norms
from .smoothing import DEFAULT_MOLLIFIER, cutoff, mollify, two_scale_eval
from .spectral import Spectral


def _grad_y(x, grid_y, has_z):
    """Spectral Y-gradient of a cell field; derivative index appended after components."""
    n = grid_y.dim
    sp = Spectral(grid_y)
    if not has_z:
        return sp.grad(x)
    nd = x.ndim
    ysl = list(range(nd - 2 * n, nd - n))
    xm = np.moveaxis(x, ysl, list(range(nd - n, nd)))  # (..., *Z, *Y)
    g = sp.grad(xm)  # (..., *Z, d, *Y)
    zpos = list(range(nd - 2 * n, nd - n))
    return np.moveaxis(g, zpos, list(range(nd - n + 1, nd + 1)))


def _div_first(E, d):
    """sum_k d[k, ...]-style contraction: sum over matching first index and derivative."""
    n = E.shape[0]
    return sum(d[k] for k in range(n))


def cell_derived(model: CellModel):
    """Cell-level derivatives needed by the expansion; cached on the model."""
    c = model.cache
    if "dys" in c:
        return c
    gy, gz = model.coef.grid_y, model.coef.grid_z
    n = gy.dim
    c["dys"] = model.slow.dy_chi()                       # [j, b, g, k, *Y]
    c["d2ys"] = _grad_y(c["dys"], gy, False)             # [j, b, g, k, l, *Y]
    c["dzf"] = model.fast.dz_chi()                       # [j, b, g, k, *Y, *Z]
    c["dyf"] = _grad_y(model.fast.chi, gy, True)         # [j, b, g, k, *Y, *Z]
    for m in (1, 3):
        fc = model.flux[m]
        gE = _grad_y(fc.E, gy, True)                     # [k, i, j, a, b, d, ...]
        c[f"divyE{m}"] = sum(gE[k, :, :, :, :, k] for k in range(n))
        del gE
        gq = _grad_y(fc.q, gy, True)                     # [i, j, b, d, ...]
        c[f"gyq{m}"] = np.moveaxis(gq, 3, 0)             # [a, i, j, b]
        c[f"divyq{m}"] = sum(gq[i, :, :, i] for i in range(n))
        gzq = np.moveaxis(Spectral(gz).grad(fc.q), -n - 1, 3)
        c[f"divzq{m}"] = sum(gzq[i, :, :, i] for i in range(n))
    gq2 = Spectral(gy).grad(model.flux[2].q)             # [i, j, b, d, *Y]
    c["divyq2"] = sum(gq2[i, :, :, i] for i in range(n))
    return c


class ExpansionContext:
    """Macro-grid evaluations for one eps, shared by the build functions."""

    def __init__(self, model: CellModel, eps, u0: StokesSolution, cutoff_multiple=2.0,
                 mollifier=DEFAULT_MOLLIFIER, method="separable"):
        self.model = model
        self.eps = float(eps)
        self.macro: MacroGrid = u0.macro
        self.method = method
        self.gy, self.gz = model.coef.grid_y, model.coef.grid_z
        self.n = self.gy.dim
        self.cell = cell_derived(model)
        self._fields = {}
        macro = self.macro
        boundary = "periodic" if macro.kind == "torus" else "zero"
        self.psi = cutoff(macro, cutoff_multiple * self.eps, mollifier=mollifier)
        S = mollify(u0.grad_u, self.eps, macro.spacing, boundary=boundary, mollifier=mollifier)
        self.G = self.psi.values * S
        self.dG = macro.gradient(self.G)
        self.grad_u0 = u0.grad_u
        self.hess_u0 = macro.gradient(u0.grad_u)
        self.a = model.coef.spec.evaluate_macro(macro.coords(), self.eps)

    def y(self, name, arr=None):
        if name not in self._fields:
            src = self.cell[name] if arr is None else arr
            self._fields[name] = two_scale_eval(src, self.eps, self.macro, self.gy, None,
                                                method=self.method)
        return self._fields[name]

    def yz(self, name, arr=None):
        if name not in self._fields:
            src = self.cell[name] if arr is None else arr
            self._fields[name] = two_scale_eval(src, self.eps, self.macro, self.gy, self.gz,
                                                method=self.method)
        return self._fields[name]

    def drop(self, *names):
        for k in names:
            self._fields.pop(k, None)

    # commonly used evaluated fields
    def chis(self):
        return self.y("chis", self.model.slow.chi)

    def chif(self):
        return self.yz("chif", self.model.fast.chi)

    def V(self):
        """V_j^a = G_j^a - d_yj chi_s,k^{a g} G_k^g, layout [a, j]."""
        if "V" not in self._fields:
            dys = self.y("dys")
            self._fields["V"] = self.G - np.einsum("kagj...,gk...->aj...", dys, self.G)
        return self._fields["V"]


def _ein(spec, *ops):
    return np.einsum(spec, *ops, optimize=True)


def build_phi(ctx: ExpansionContext):
    """phi^b = eps chi_s,j^{bg} G_j^g + eps^2 chi_f,j^{ba} V_j^a and its gradient."""
    e = ctx.eps
    chis, chif, V = ctx.chis(), ctx.chif(), ctx.V()
    dys, d2ys = ctx.y("dys"), ctx.y("d2ys")
    dyf, dzf = ctx.yz("dyf"), ctx.yz("dzf")
    G, dG = ctx.G, ctx.dG
    phi = e * _ein("jbg...,gj...->b...", chis, G) + e ** 2 * _ein("jba...,aj...->b...", chif, V)
    dV = dG - _ein("kagjh...,gk...->ajh...", d2ys, G) / e - _ein("kagj...,gkh...->ajh...", dys, dG)
    grad = (_ein("jbgh...,gj...->bh...", dys, G) + e * _ein("jbg...,gjh...->bh...", chis, dG)
            + _ein("jbah...,aj...->bh...", e * dyf + dzf, V)
            + e ** 2 * _ein("jba...,ajh...->bh...", chif, dV))
    return phi, grad, dV


def build_w_eps(ctx: ExpansionContext, u_eps: StokesSolution, u0: StokesSolution):
    """w = u_eps - u0 + phi with its chain-rule gradient [b, h]."""
    phi, gphi, _ = build_phi(ctx)
    w = u_eps.u - u0.u + phi
    gw = u_eps.grad_u - u0.grad_u + gphi
    return w, gw, phi, gphi


def build_pi_tilde(ctx: ExpansionContext):
    """pi_f G + pi_s G - pi_f,j^g d_yj chi_s,k^{g b} G_k^b (not mean-normalized)."""
    pif = ctx.yz("pif", ctx.model.fast.pi)      # [k, b]
    pis = ctx.y("pis", ctx.model.slow.pi)
    dys = ctx.y("dys")
    G = ctx.G
    return (_ein("kb...,bk...->...", pif + pis, G)
            - _ein("jg...,kgbj...,bk...->...", pif, dys, G))


def build_z_eps(ctx: ExpansionContext, u_eps: StokesSolution, u0: StokesSolution):
    """z_eps = p_eps - p0 + eps^2 d_i(q1 G) + eps d_i(q2 G) + eps^2 d_i(q3 G), chain rule.

    Returns (z, T) with T the five remainder terms of the pi-tilde rewrite.
    """
    e = ctx.eps
    G, dG = ctx.G, ctx.dG
    q1 = ctx.yz("q1", ctx.model.flux[1].q)
    q3 = ctx.yz("q3", ctx.model.flux[3].q)
    q2 = ctx.y("q2", ctx.model.flux[2].q)
    dq = {m: ctx.yz(f"divyq{m}") for m in (1, 3)}
    dzq = {m: ctx.yz(f"divzq{m}") for m in (1, 3)}
    dq2 = ctx.y("divyq2")
    qdG = {m: _ein("ijb...,bji...->...", q, dG) for m, q in ((1, q1), (2, q2), (3, q3))}
    contract = lambda X: _ein("jb...,bj...->...", X, G)  # noqa: E731
    Q1 = e * contract(dq[1]) + contract(dzq[1]) + e ** 2 * qdG[1]
    Q2 = contract(dq2) + e * qdG[2]
    Q3 = e * contract(dq[3]) + contract(dzq[3]) + e ** 2 * qdG[3]
    z = u_eps.p - u0.p + Q1 + Q2 + Q3
    T = [e * contract(dq[1]), e * qdG[2], e * contract(dq[3]), e ** 2 * qdG[3], e ** 2 * qdG[1]]
    return z, T, (Q1, Q2, Q3)


def residual_terms(ctx: ExpansionContext, u_eps: StokesSolution, u0: StokesSolution):
    """H0..H4 and H21..H23 as [i, alpha] fields (sigma layout [alpha, i])."""
    e = ctx.eps
    a = ctx.a
    ah = ctx.model.a_hat
    G, dG = ctx.G, ctx.dG
    V = ctx.V()
    chis, chif = ctx.chis(), ctx.chif()
    d2ys, dys = ctx.y("d2ys"), ctx.y("dys")
    dyf = ctx.yz("dyf")
    flux = lambda A, g: _ein("ihab...,bh...->ai...", A, g)  # noqa: E731
    H = {}
    H["H0"] = flux(a, u_eps.grad_u) - _ein("ihab,bh...->ai...", ah, u0.grad_u)
    H["H1"] = flux(ah.reshape(ah.shape + (1,) * ctx.n) - a, u0.grad_u - G)
    I1 = ctx.yz("I1", ctx.model.I1)
    I3 = ctx.yz("I3", ctx.model.I3)
    I2 = ctx.y("I2", ctx.model.I2.values)
    H["H2"] = _ein("ijab...,bj...->ai...", I1 + I2 + I3, G)
    H["H3"] = (e * _ein("ihab...,jbg...,gjh...->ai...", a, chis, dG)
               - e * _ein("ihab...,jbg...,kgrjh...,rk...->ai...", a, chif, d2ys, G)
               + e * _ein("ihab...,jbgh...,gj...->ai...", a, dyf, V))
    H["H4"] = e ** 2 * _ein("ihab...,jbg...,gjh...->ai...", a, chif,
                            dG - _ein("kgrj...,rkh...->gjh...", dys, dG))
    for m, key in ((1, "H21"), (3, "H23")):
        E = ctx.yz(f"E{m}", ctx.model.flux[m].E)
        q = ctx.yz(f"q{m}", ctx.model.flux[m].q)
        divyE = ctx.yz(f"divyE{m}")
        gyq = ctx.yz(f"gyq{m}")
        H[key] = (-e * _ein("ijab...,bj...->ai...", divyE, G)
                  - e * _ein("aijb...,bj...->ai...", gyq, G)
                  - e ** 2 * _ein("kijab...,bjk...->ai...", E, dG)
                  - e ** 2 * _ein("ijb...,bja...->ai...", q, dG))
        ctx.drop(f"E{m}", f"divyE{m}", f"gyq{m}")
    E2 = ctx.y("E2", ctx.model.flux[2].E)
    q2 = ctx.y("q2", ctx.model.flux[2].q)
    H["H22"] = (-e * _ein("kijab...,bjk...->ai...", E2, dG)
                - e * _ein("ijb...,bja...->ai...", q2, dG))
    direct_H2 = flux(ah.reshape(ah.shape + (1,) * ctx.n) - a, G) + _ein(
        "ikag...,jgbk...,bj...->ai...", a, dys + ctx.yz("dzf"), G) - _ein(
        "ikah...,lhgk...,jgbl...,bj...->ai...", a, ctx.yz("dzf"), dys, G)
    return H, direct_H2


def _l2(x, macro, mask=None):
    return norms(x, macro, grad=np.zeros((1,) + macro.shape), mask=mask)["L2"]


def _test_fields(macro, count=3, seed=12345, kmax=3):
    """Smooth random vector fields and their gradients [b, h] for weak-form checks."""
    rng = np.random.default_rng(seed)
    x = macro.coords()
    n = macro.dim
    out = []
    for _ in range(count):
        phi = np.zeros((n,) + macro.shape)
        grad = np.zeros((n, n) + macro.shape)
        for b in range(n):
            for _t in range(4):
                k = rng.integers(-kmax, kmax + 1, size=n)
                amp, ph = rng.standard_normal(), rng.uniform(0, 2 * np.pi)
                th = 2 * np.pi * np.tensordot(k.astype(float), x, axes=1) + ph
                phi[b] += amp * np.cos(th)
                for h in range(n):
                    grad[b, h] -= amp * 2 * np.pi * k[h] * np.sin(th)
        out.append((phi, grad))
    return out


@dataclass
class ExpansionBundle:
    eps: float
    w_eps: np.ndarray
    grad_w: np.ndarray
    phi: np.ndarray
    div_phi: np.ndarray
    z_eps: np.ndarray
    pi_tilde: np.ndarray
    residual_norms: dict
    checks: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)


def expand(model: CellModel, eps, u_eps: StokesSolution, u0: StokesSolution,
           cutoff_multiple=2.0, mollifier=DEFAULT_MOLLIFIER, method="separable",
           weak_checks=True):
    """Assemble w_eps, phi, z_eps, pi-tilde and all residual norms for one eps."""
    ctx = ExpansionContext(model, eps, u0, cutoff_multiple, mollifier, method)
    macro = ctx.macro
    n = ctx.n
    e = ctx.eps
    w, gw, phi, gphi = build_w_eps(ctx, u_eps, u0)
    div_phi = sum(gphi[b, b] for b in range(n))
    div_w = sum(gw[b, b] for b in range(n))
    pit = build_pi_tilde(ctx)
    z, T, Q = build_z_eps(ctx, u_eps, u0)
    H, direct_H2 = residual_terms(ctx, u_eps, u0)

    chif = ctx.chif()
    G, dG = ctx.G, ctx.dG
    dyf, dzf = ctx.yz("dyf"), ctx.yz("dzf")
    J = {"J1": e * _ein("jbab...,aj...->...", dyf, G),
         "J2": _ein("jbab...,aj...->...", dzf, G),
         "J3": e ** 2 * _ein("jba...,ajb...->...", chif, dG)}

    res = {k: _l2(v, macro) for k, v in H.items()}
    res.update({k: _l2(v, macro) for k, v in J.items()})
    res["H21+H22+H23"] = _l2(H["H21"] + H["H22"] + H["H23"], macro)
    res["sum_T"] = _l2(sum(T), macro)
    res["div_phi"] = _l2(div_phi, macro)

    checks = {}
    flux_w = _ein("ihab...,bh...->ai...", ctx.a, gw)
    Hsum = H["H0"] + H["H1"] + H["H2"] + H["H3"] + H["H4"]
    checks["flux_expansion_identity"] = _l2(flux_w - Hsum, macro) / max(_l2(flux_w, macro), 1e-300)
    checks["H2_formula_gap"] = _l2(H["H2"] - direct_H2, macro) / max(_l2(H["H2"], macro), 1e-300)
    scale_div = max(_l2(div_phi, macro), _l2(u0.grad_u, macro), 1e-300)
    checks["div_identity"] = _l2(div_w - div_phi - (sum(u_eps.grad_u[b, b] for b in range(n))
                                                    - sum(u0.grad_u[b, b] for b in range(n))),
                                 macro) / scale_div
    checks["div_w_minus_div_phi"] = _l2(div_w - div_phi, macro) / scale_div
    checks["int_div_phi"] = abs(macro.integrate(div_phi))
    z_alt = u_eps.p - u0.p + pit + sum(T)
    checks["z_identity"] = _l2(z - z_alt, macro) / max(_l2(z, macro), 1e-300)
    if weak_checks:
        tests = _test_fields(macro)
        worst1 = worst = 0.0
        lhs_all = H["H2"]
        rhs_all = H["H21"] + H["H22"] + H["H23"]
        Qs = sum(Q)
        I1G = _ein("ijab...,bj...->ai...", ctx.yz("I1"), G)
        for ph, gph in tests:
            dvp = sum(gph[b, b] for b in range(n))
            gnorm = _l2(gph, macro)
            l1 = macro.integrate(_ein("ai...,ai...->...", I1G, gph))
            r1 = macro.integrate(_ein("ai...,ai...->...", H["H21"], gph)) + macro.integrate(Q[0] * dvp)
            worst1 = max(worst1, abs(l1 - r1) / max(_l2(I1G, macro) * gnorm, 1e-300))
            la = macro.integrate(_ein("ai...,ai...->...", lhs_all, gph))
            ra = macro.integrate(_ein("ai...,ai...->...", rhs_all, gph)) + macro.integrate(Qs * dvp)
            worst = max(worst, abs(la - ra) / max(_l2(lhs_all, macro) * gnorm, 1e-300))
        checks["weak_I1_rewrite"] = worst1
        checks["weak_H2_rewrite"] = worst

    pi_n = pit - macro.integrate(pit) / macro.integrate(np.ones(macro.shape))
    perr = u_eps.p - u0.p + pi_n
    perr = perr - macro.integrate(perr) / macro.integrate(np.ones(macro.shape))
    zc = z - macro.integrate(z) / macro.integrate(np.ones(macro.shape))
    layer = macro.dist_to_boundary() <= 5 * e
    g0 = _l2(u0.grad_u, macro)
    d2 = _l2(ctx.hess_u0, macro)
    gl = _l2(u0.grad_u, macro, mask=layer) if macro.kind == "square" else 0.0
    wn = norms(w, macro, grad=gw)
    du = norms(u_eps.u - u0.u, macro, grad=u_eps.grad_u - u0.grad_u)
    denom = e * d2 + gl + e * g0
    meas = {
        "err_u_L2": du["L2"],
        "err_u_H1": du["H1"],
        "err_w_H1": wn["H1"],
        "err_p_L2": _l2(perr, macro),
        "z_centered_L2": _l2(zc, macro),
        "grad_u0_L2": g0,
        "hess_u0_L2": d2,
        "grad_u0_layer_L2": gl,
        "C_residual": res["H21+H22+H23"] / (e * g0) if g0 > 0 else float("nan"),
        "C_energy": (wn["H1"] + _l2(zc, macro)) / denom if denom > 0 else float("nan"),
        "C_div_phi": res["div_phi"] / denom if denom > 0 else float("nan"),
        "cutoff_gradient_constant": ctx.psi.gradient_constant,
    }
    return ExpansionBundle(e, w, gw, phi, div_phi, z, pi_n, res, checks, meas)
