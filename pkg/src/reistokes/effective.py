"""Effective tensor, discrepancy tensors I1, I2, I3 and their flux correctors.

Sign convention: every discrepancy tensor is written as

    I_ij^{ab} = d_h E_hij^{ab} + d_a q_ij^b,

with E skew in (h, i), derivatives taken in the oscillation variable of the
family (z for m = 1, 3; y for m = 2).
"""
from dataclasses import dataclass, field

import numpy as np

from .cellsolve import (FastCorrectorFamily, MesoscaleCoefficient, SlowCorrectorFamily,
                        _contract_a_dchi)
from .errors import MeanNotZero
from .fields import PeriodicGrid, TwoScaleCoefficient, check_ellipticity
from .spectral import Spectral


@dataclass
class EffectiveTensor:
    a_hat: np.ndarray
    a_hat_slow: np.ndarray
    ellipticity: object

    @property
    def consistency(self):
        """Gap between the double-average formula and the slow-cell formula."""
        return float(np.abs(self.a_hat - self.a_hat_slow).max())

    def table(self):
        """Rows (i, j, alpha, beta, value) in row-major order."""
        n = self.a_hat.shape[0]
        return [(i, j, a, b, float(self.a_hat[i, j, a, b]))
                for i in range(n) for j in range(n) for a in range(n) for b in range(n)]


def _y_broadcast(x, n):
    """Append n singleton Z axes to a Y-only field."""
    return x.reshape(x.shape + (1,) * n)


def assemble_effective(coef: TwoScaleCoefficient, fast: FastCorrectorFamily,
                       slow: SlowCorrectorFamily, meso: MesoscaleCoefficient = None,
                       n_xi=10000, seed=0, check=True):
    """Double average over Y x Z of a (I - d_z chi_f)(I - d_y chi_s)."""
    n = coef.dim
    a = coef.samples
    dz = fast.dz_chi()
    dys = _y_broadcast(slow.dy_chi(), n)
    B = _contract_a_dchi(a, dz, n)
    T3 = _contract_a_dchi(a, dys, n)
    T4 = _contract_a_dchi(B, dys, n)
    axes = tuple(range(4, 4 + 2 * n))
    a_hat = (a - B - T3 + T4).mean(axis=axes)
    if meso is None:
        a2 = (a - B).mean(axis=tuple(range(4 + n, 4 + 2 * n)))
    else:
        a2 = meso.a2
    a_slow = (a2 - _contract_a_dchi(a2, slow.dy_chi(), n)).mean(axis=tuple(range(4, 4 + n)))
    rep = check_ellipticity(a_hat, coef.spec.mu, n_xi=n_xi, seed=seed, raise_on_fail=check)
    return EffectiveTensor(a_hat, a_slow, rep)


def _scale(coef):
    return max(1.0, float(np.abs(coef.samples).max()))


def compute_I1(coef: TwoScaleCoefficient, fast: FastCorrectorFamily, meso: MesoscaleCoefficient,
               tol=1e-9):
    """I1 = -a + a d_z chi_f + a2; zero Z-mean for every y."""
    n = coef.dim
    B = _contract_a_dchi(coef.samples, fast.dz_chi(), n)
    I1 = -coef.samples + B + _y_broadcast(meso.a2, n)
    m = np.abs(I1.mean(axis=tuple(range(-n, 0)))).max()
    if m > tol * _scale(coef):
        raise MeanNotZero(f"I1 has Z-mean {m:.3e}")
    return I1


@dataclass
class DiscrepancyI2:
    values: np.ndarray
    measured_mean: float


def compute_I2(a_hat, meso: MesoscaleCoefficient, slow: SlowCorrectorFamily, tol=1e-9):
    """I2 = a_hat - a2 + a2 d_y chi_s; the measured Y-mean is recorded then removed."""
    n = meso.a2.shape[0]
    I2 = a_hat.reshape(a_hat.shape + (1,) * n) - meso.a2 + _contract_a_dchi(
        meso.a2, slow.dy_chi(), n)
    mean = I2.mean(axis=tuple(range(-n, 0)), keepdims=True)
    m = float(np.abs(mean).max())
    if m > tol * max(1.0, float(np.abs(meso.a2).max())):
        raise MeanNotZero(f"I2 has Y-mean {m:.3e}")
    return DiscrepancyI2(I2 - mean, m)


def compute_I3(coef: TwoScaleCoefficient, fast: FastCorrectorFamily,
               slow: SlowCorrectorFamily, tol=1e-9):
    """Z-fluctuation of (a - a d_z chi_f) d_y chi_s."""
    n = coef.dim
    dys = _y_broadcast(slow.dy_chi(), n)
    X = _contract_a_dchi(coef.samples - _contract_a_dchi(coef.samples, fast.dz_chi(), n), dys, n)
    I3 = X - X.mean(axis=tuple(range(-n, 0)), keepdims=True)
    m = np.abs(I3.mean(axis=tuple(range(-n, 0)))).max()
    if m > tol * _scale(coef):
        raise MeanNotZero(f"I3 has Z-mean {m:.3e}")
    return I3


@dataclass
class FluxCorrectorSet:
    """E[h, i, j, alpha, beta, *lead, *osc] and q[i, j, beta, *lead, *osc]."""

    family: int
    grid: PeriodicGrid
    E: np.ndarray
    q: np.ndarray
    nyquist_remainder: float
    checks: dict = field(default_factory=dict)


def _vector_last(I, n):
    """[i, j, alpha, beta, *lead, *osc] -> [i, j, beta, *lead, alpha, *osc]."""
    return np.moveaxis(I, 2, I.ndim - n - 1)


def _vector_back(V, n):
    return np.moveaxis(V, V.ndim - n - 1, 2)


def build_flux_correctors(I, grid: PeriodicGrid, family, mean_tol=1e-9):
    """Skew potential E and pressure q with d_h E_hij + d_a q_ij = T I.

    ``I`` is [i, j, alpha, beta, *lead, *osc] with osc on ``grid``; only
    modes kept by the truncation are represented, the rest is reported.
    """
    n = grid.dim
    sp = Spectral(grid)
    scale = max(float(np.abs(I).max()), 1e-300)
    m = float(np.abs(I.mean(axis=sp.axes)).max())
    if m > mean_tol * max(scale, 1.0):
        raise MeanNotZero(f"I{family} has mean {m:.3e} over the oscillation cell")
    V = _vector_last(I, n)
    Vh = sp.fwd(V) * sp.keep
    nyq = float(np.abs(V - sp.inv(Vh)).max()) / scale
    kdot = 0
    for d, kd in enumerate(sp.k):
        kdot = kdot + kd * Vh[(Ellipsis, d) + (slice(None),) * n]
    qh = -1j * kdot * sp.inv_k2 / (2 * np.pi)
    PV = sp.leray_hat(Vh)
    del Vh
    PV = _vector_back(PV, n)  # [i, j, alpha, beta, *lead, *h]
    c = -1j * sp.inv_k2 / (2 * np.pi)
    E = np.zeros((n,) + I.shape)
    for h in range(n):
        for i in range(h + 1, n):
            eh = c * (sp.k[h] * PV[i] - sp.k[i] * PV[h])  # [j, alpha, beta, ...]
            E[h, i] = sp.inv(eh)
            E[i, h] = -E[h, i]
    q = sp.inv(qh)
    fc = FluxCorrectorSet(family, grid, E, q, nyq)
    fc.checks["nyquist_remainder"] = nyq
    return fc


def flux_identity_residual(fc: FluxCorrectorSet, I):
    """max |d_h E_hij + d_a q_ij - T I| / max |I| over all components."""
    n = fc.grid.dim
    sp = Spectral(fc.grid)
    divE = 0
    for h in range(n):
        divE = divE + sp.inv(2j * np.pi * sp.k[h] * sp.keep * sp.fwd(fc.E[h]))
    gq = _vector_back(sp.grad(fc.q), n)  # d_a q_ij^b as [i, j, alpha, beta]
    TI = sp.truncate(I)
    scale = max(float(np.abs(I).max()), 1e-300)
    return float(np.abs(divE + gq - TI).max()) / scale


def skew_residual(fc: FluxCorrectorSet):
    scale = max(float(np.abs(fc.E).max()), 1e-300)
    return float(np.abs(fc.E + np.swapaxes(fc.E, 0, 1)).max()) / scale


def pressure_link_residual(fc: FluxCorrectorSet, target):
    """max |d_i q_ij^b - target_j^b| relative; target[j, beta, ...]."""
    n = fc.grid.dim
    sp = Spectral(fc.grid)
    g = sp.grad(fc.q)  # [i, j, beta, ..., d]
    d = sum(g[(i,) + (slice(None),) * (g.ndim - n - 2) + (i,)] for i in range(n))
    scale = max(float(np.abs(target).max()), 1e-300)
    return float(np.abs(d - sp.truncate(target)).max()) / scale


def pi_dychi(fast: FastCorrectorFamily, slow: SlowCorrectorFamily):
    """-pi_f,k^g d_yk chi_s,j^{g b} as [j, beta, *Y, *Z], the q3 pressure-link target."""
    n = fast.grid_z.dim
    dys = slow.dy_chi()  # [j, gamma, beta, k, *Y]
    out = np.zeros((n, n) + fast.pi.shape[2:])
    for j in range(n):
        for b in range(n):
            for k in range(n):
                for g in range(n):
                    out[j, b] -= fast.pi[k, g] * _y_broadcast(dys[j, g, b, k], n)
    return out


@dataclass
class CellModel:
    """Everything computed on the unit cells, shared by all eps."""

    coef: TwoScaleCoefficient
    fast: FastCorrectorFamily
    meso: MesoscaleCoefficient
    slow: SlowCorrectorFamily
    effective: EffectiveTensor
    I1: np.ndarray
    I2: DiscrepancyI2
    I3: np.ndarray
    flux: dict
    checks: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def a_hat(self):
        return self.effective.a_hat


def build_cell_model(coef: TwoScaleCoefficient, rtol=1e-10, maxiter=None, workers=1,
                     n_xi=10000, seed=0, stage_hook=None):
    """Fast and slow correctors, a2, a_hat, I1..I3 and flux correctors, with checks."""
    from .cellsolve import assemble_mesoscale, solve_fast_family, solve_slow_family

    def stage(name):
        if stage_hook is not None:
            stage_hook(name)
    stage("fast cell problems")
    fast = solve_fast_family(coef, rtol=rtol, maxiter=maxiter, workers=workers)
    stage("mesoscale coefficient")
    meso = assemble_mesoscale(coef, fast, seed=seed)
    stage("slow cell problems")
    slow = solve_slow_family(meso, rtol=rtol, maxiter=maxiter)
    stage("effective tensor")
    eff = assemble_effective(coef, fast, slow, meso, n_xi=n_xi, seed=seed)
    stage("discrepancy tensors")
    I1 = compute_I1(coef, fast, meso)
    I2 = compute_I2(eff.a_hat, meso, slow)
    I3 = compute_I3(coef, fast, slow)
    stage("flux correctors")
    fc = {1: build_flux_correctors(I1, coef.grid_z, 1),
          2: build_flux_correctors(I2.values, coef.grid_y, 2),
          3: build_flux_correctors(I3, coef.grid_z, 3)}
    checks = {
        "fast_residual": fast.residual,
        "slow_residual": slow.residual,
        "a_hat_formula_gap": eff.consistency,
        "I2_measured_mean": I2.measured_mean,
    }
    targets = {1: fast.pi, 2: slow.pi, 3: pi_dychi(fast, slow)}
    sources = {1: I1, 2: I2.values, 3: I3}
    for m in (1, 2, 3):
        checks[f"skew_E{m}"] = skew_residual(fc[m])
        checks[f"flux_identity_{m}"] = flux_identity_residual(fc[m], sources[m])
        checks[f"pressure_link_{m}"] = pressure_link_residual(fc[m], targets[m])
        checks[f"nyquist_remainder_{m}"] = fc[m].nyquist_remainder
    return CellModel(coef, fast, meso, slow, eff, I1, I2, I3, fc, checks)
