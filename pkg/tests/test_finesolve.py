import numpy as np
import pytest

from conftest import torus_forcing, two_scale_spec
from oracles import dense_stokes
from reistokes.errors import IncompatibleData, NonZeroMean, ResolutionInsufficient
from reistokes.fields import MacroGrid, identity_tensor
from reistokes.finesolve import (DomainSpec, ModeTerm, boundary_layer_norm, check_resolution,
                                 macro_points, norms, solve_homogenized, solve_reiterated)


def test_macro_points_rule():
    assert [macro_points(1 / k) for k in range(2, 7)] == [64, 128, 128, 256, 512]
    assert macro_points(0.5, macro_min=16) == 32


def test_resolution_guard():
    check_resolution(128, 0.25)
    with pytest.raises(ResolutionInsufficient):
        check_resolution(64, 0.25)


def test_torus_identity_closed_form():
    dom = DomainSpec("torus", forcing=[ModeTerm(0, (0, 2), 3.0)])
    sol = solve_homogenized(identity_tensor(2), dom, 32)
    x = sol.macro.coords()
    want = 3.0 * np.cos(4 * np.pi * x[1]) / (16 * np.pi ** 2)
    np.testing.assert_allclose(sol.u[0], want, atol=1e-14)
    np.testing.assert_allclose(sol.u[1], 0, atol=1e-14)
    np.testing.assert_allclose(sol.p, 0, atol=1e-14)


def test_gradient_forcing_goes_to_pressure():
    dom = DomainSpec("torus", forcing=[ModeTerm(0, (1, 0), 2 * np.pi, np.pi / 2)])
    sol = solve_homogenized(identity_tensor(2), dom, 16)
    x = sol.macro.coords()
    np.testing.assert_allclose(sol.u, 0, atol=1e-13)
    np.testing.assert_allclose(sol.p, np.cos(2 * np.pi * x[0]), atol=1e-12)


def test_zero_forcing():
    sol = solve_reiterated(two_scale_spec(), 0.5, DomainSpec("torus"), macro_min=32)
    assert np.abs(sol.u).max() == 0.0
    assert np.abs(sol.p).max() == 0.0


def test_eps_one_matches_dense_oracle():
    dom = DomainSpec("torus", forcing=torus_forcing())
    spec = two_scale_spec()
    sol = solve_reiterated(spec, 1.0, dom, points=16, rtol=1e-12)
    x = sol.macro.coords()
    ud, pd = dense_stokes(spec.evaluate_macro(x, 1.0), 16, force=dom.f(x))
    np.testing.assert_allclose(sol.u, ud, atol=1e-10 * np.abs(ud).max())
    np.testing.assert_allclose(sol.p, pd, atol=1e-9 * np.abs(pd).max())
    assert sol.div_residual <= 1e-10
    assert np.isfinite(sol.energy_ratio) and sol.energy_ratio > 0


def test_torus_needs_integer_inverse_eps():
    with pytest.raises(IncompatibleData):
        solve_reiterated(two_scale_spec(), 0.4, DomainSpec("torus"), points=64)


def test_domain_validation():
    with pytest.raises(NonZeroMean):
        DomainSpec("torus", forcing=[ModeTerm(0, (0, 0), 1.0)])
    with pytest.raises(IncompatibleData):
        DomainSpec("torus", forcing=[ModeTerm(0, (0.5, 0), 1.0)])
    with pytest.raises(IncompatibleData):
        DomainSpec("square", divergence=[ModeTerm(0, (0, 0), 1.0)])
    with pytest.raises(ValueError):
        DomainSpec("disk")


def test_square_compatible_data_accepted():
    # net outflow of g = (-cos(pi x1) / 2, 0) is 1, matching int h
    dom = DomainSpec("square", divergence=[ModeTerm(0, (0, 0), 1.0)],
                     boundary=[ModeTerm(0, (0.5, 0), -0.5)])
    assert abs(dom.compatibility_gap()) < 1e-12


def _square_error(M):
    # u = (cos 2 pi x2, 0), p = 0 solves -lap u + grad p = 4 pi^2 u, div u = 0
    dom = DomainSpec("square", forcing=[ModeTerm(0, (0, 1), 4 * np.pi ** 2)],
                     boundary=[ModeTerm(0, (0, 1), 1.0)])
    sol = solve_homogenized(identity_tensor(2), dom, M)
    x = sol.macro.coords()
    err = sol.u - np.stack([np.cos(2 * np.pi * x[1]), np.zeros_like(x[0])])
    return float(np.abs(err).max()), sol


def test_square_manufactured_second_order():
    e32, _ = _square_error(32)
    e64, sol = _square_error(64)
    assert e64 < 1e-2
    assert 3.0 < e32 / e64 < 5.0
    assert sol.div_residual <= 1e-10


def test_norms_closed_form():
    m = MacroGrid("torus", 32)
    x = m.coords()
    f = np.sin(2 * np.pi * x[0])[None]
    n = norms(f, m)
    assert n["L2"] == pytest.approx(np.sqrt(0.5), abs=1e-14)
    assert n["H1semi"] == pytest.approx(2 * np.pi * np.sqrt(0.5), abs=1e-12)
    assert n["H1"] == pytest.approx(np.hypot(n["L2"], n["H1semi"]))


def test_boundary_layer_norm_of_constant():
    m = MacroGrid("square", 64)
    # strip of cells within 1/8 of the boundary: 1 - (1 - 2/8)^2
    assert boundary_layer_norm(np.ones((1, 64, 64)), m, 0.125) ** 2 == pytest.approx(1 - 0.75 ** 2)
