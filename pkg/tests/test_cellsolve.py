import numpy as np
import pytest

from conftest import two_scale_spec
from oracles import dense_stokes
from reistokes.cellsolve import (solve_fast_cell, solve_fast_family, solve_stokes_auxiliary,
                                 stokes_cell_solve, stokes_periodic_solve)
from reistokes.errors import NoConvergence, NonZeroMean
from reistokes.fields import (CoefficientSpec, CoefficientTerm, PeriodicGrid, identity_tensor,
                              sample_coefficient)
from reistokes.spectral import Spectral

N = 8
GRID = PeriodicGrid(2, N)


def _coeff(which=0):
    c = sample_coefficient(two_scale_spec(), PeriodicGrid(2, 4), GRID)
    return np.ascontiguousarray(c.samples[..., which, 1, :, :])


def _flux(seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((2, 2, N, N))


def test_constant_coefficient_gives_zero_corrector():
    a = 1.7 * identity_tensor(2)
    G = np.broadcast_to(np.moveaxis(a, (0, 1, 2, 3), (3, 0, 2, 1))[..., None, None],
                        (2, 2, 2, 2, N, N)).reshape(4, 2, 2, N, N)
    u, p = stokes_cell_solve(a, G, GRID)
    np.testing.assert_allclose(u, 0, atol=1e-14)
    np.testing.assert_allclose(p, 0, atol=1e-14)


def test_pcg_matches_dense_oracle():
    a = _coeff(1)
    G = _flux(1)
    sol = stokes_periodic_solve(a, GRID, flux=G, rtol=1e-12)
    ud, pd = dense_stokes(a, N, flux=G)
    assert sol.method == "pcg"
    np.testing.assert_allclose(sol.velocity, ud, atol=1e-10 * np.abs(ud).max())
    np.testing.assert_allclose(sol.pressure, pd, atol=1e-10 * np.abs(pd).max())


def test_constant_direct_matches_dense_oracle():
    rng = np.random.default_rng(5)
    a = identity_tensor(2) + 0.1 * rng.standard_normal((2,) * 4)
    a = 0.5 * (a + np.moveaxis(a, (0, 1, 2, 3), (1, 0, 3, 2)))
    G = _flux(2)
    sol = stokes_periodic_solve(a, GRID, flux=G)
    ud, pd = dense_stokes(a, N, flux=G)
    assert sol.method == "direct"
    np.testing.assert_allclose(sol.velocity, ud, atol=1e-11)
    np.testing.assert_allclose(sol.pressure, pd, atol=1e-11)


def test_nonsymmetric_uses_gmres():
    A = np.zeros((2,) * 4)
    A[1, 0, 1, 0] = 0.1
    s = CoefficientSpec(2, 0.4, [CoefficientTerm(1.0, (0, 0), (0, 0)),
                                 CoefficientTerm(A, (0, 0), (1, 0))])
    a = sample_coefficient(s, PeriodicGrid(2, 4), GRID).samples[..., 0, 0, :, :]
    a = np.ascontiguousarray(a)
    G = _flux(3)
    sol = stokes_periodic_solve(a, GRID, flux=G, rtol=1e-12)
    ud, pd = dense_stokes(a, N, flux=G)
    assert sol.method == "gmres"
    np.testing.assert_allclose(sol.velocity, ud, atol=1e-9 * np.abs(ud).max())


def test_solution_constraints():
    a = _coeff(2)
    sol = stokes_periodic_solve(a, GRID, flux=_flux(4))
    sp = Spectral(GRID)
    np.testing.assert_allclose(sol.velocity.mean(axis=(-2, -1)), 0, atol=1e-14)
    np.testing.assert_allclose(sol.pressure.mean(), 0, atol=1e-14)
    np.testing.assert_allclose(sp.div(sol.velocity), 0, atol=1e-12)
    assert sol.residual.max() <= 1e-10


def test_prescribed_divergence():
    sp = Spectral(GRID)
    x = GRID.coords()
    h = np.cos(2 * np.pi * (x[0] + x[1]))
    f = np.stack([np.sin(2 * np.pi * x[1]), np.zeros((N, N))])
    sol = stokes_periodic_solve(_coeff(0), GRID, force=f, div=h)
    np.testing.assert_allclose(sp.div(sol.velocity), h, atol=1e-10)


def test_nonzero_mean_forcing_rejected():
    with pytest.raises(NonZeroMean):
        stokes_periodic_solve(_coeff(), GRID, force=np.ones((2, N, N)))


def test_iteration_budget_reported():
    with pytest.raises(NoConvergence) as exc:
        stokes_periodic_solve(_coeff(3), GRID, flux=_flux(5), maxiter=1)
    assert exc.value.iterations == 1
    assert exc.value.residual > 1e-10


def test_batched_matches_single():
    c = sample_coefficient(two_scale_spec(), PeriodicGrid(2, 4), GRID)
    A = np.moveaxis(c.samples.reshape((2,) * 4 + (16, N, N)), 4, 0)[:3]
    G = np.stack([_flux(s)[None] for s in range(3)])
    batch = stokes_periodic_solve(np.ascontiguousarray(A), GRID, flux=G)
    for b in range(3):
        single = stokes_periodic_solve(np.ascontiguousarray(A[b]), GRID, flux=G[b, 0])
        np.testing.assert_allclose(batch.velocity[b, 0], single.velocity, atol=1e-10)


def test_family_matches_single_cell_solve():
    c = sample_coefficient(two_scale_spec(), PeriodicGrid(2, 4), GRID)
    fam = solve_fast_family(c, chunk=5)
    chi, pi, _ = solve_fast_cell(c, (1, 2))
    np.testing.assert_allclose(fam.chi[..., 1, 2, :, :], chi, atol=1e-10)
    np.testing.assert_allclose(fam.pi[..., 1, 2, :, :], pi, atol=1e-10)


def test_family_threads_match_serial():
    c = sample_coefficient(two_scale_spec(), PeriodicGrid(2, 4), GRID)
    a = solve_fast_family(c, chunk=4, workers=1)
    b = solve_fast_family(c, chunk=4, workers=3)
    np.testing.assert_array_equal(a.chi, b.chi)


def test_auxiliary_problem():
    sp = Spectral(GRID)
    I = _flux(6)
    I -= I.mean(axis=(-2, -1), keepdims=True)
    f, q, rem = solve_stokes_auxiliary(I, GRID)
    lap = np.stack([sp.div(sp.grad(f[..., a, :, :])) for a in range(2)], axis=-3)
    gq = sp.grad(q)
    np.testing.assert_allclose(lap + gq, sp.truncate(I), atol=1e-10)
    np.testing.assert_allclose(sp.div(f), 0, atol=1e-11)
    np.testing.assert_allclose(sp.truncate(I) + rem, I, atol=1e-12)
