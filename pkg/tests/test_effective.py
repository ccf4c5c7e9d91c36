import numpy as np
import pytest

from conftest import anisotropic_z_spec, two_scale_spec
from oracles import moulinec_suquet_effective
from reistokes.effective import build_cell_model, build_flux_correctors, flux_identity_residual
from reistokes.errors import MeanNotZero
from reistokes.fields import CoefficientSpec, PeriodicGrid, identity_tensor, sample_coefficient
from reistokes.spectral import Spectral


@pytest.fixture(scope="module")
def model():
    c = sample_coefficient(two_scale_spec(), PeriodicGrid(2, 8), PeriodicGrid(2, 16))
    return build_cell_model(c, n_xi=500)


def test_constant_coefficient_is_its_own_average():
    A = 1.3 * identity_tensor(2)
    c = sample_coefficient(CoefficientSpec.constant(A, 0.5), PeriodicGrid(2, 4), PeriodicGrid(2, 4))
    m = build_cell_model(c, n_xi=200)
    np.testing.assert_allclose(m.a_hat, A, atol=1e-14)
    for I in (m.I1, m.I2.values, m.I3):
        np.testing.assert_allclose(I, 0, atol=1e-14)


def test_z_only_matches_periodic_oracle():
    c = sample_coefficient(anisotropic_z_spec(), PeriodicGrid(2, 4), PeriodicGrid(2, 16))
    m = build_cell_model(c, n_xi=200)
    ref = moulinec_suquet_effective(np.ascontiguousarray(c.samples[..., 0, 0, :, :]), 16)
    np.testing.assert_allclose(m.a_hat, ref, atol=1e-9)


def test_two_formulas_agree(model):
    assert model.effective.consistency <= 1e-10


def test_effective_is_elliptic_and_symmetric(model):
    assert model.effective.ellipticity.passed
    a = model.a_hat
    np.testing.assert_allclose(a, np.moveaxis(a, (0, 1, 2, 3), (1, 0, 3, 2)), atol=1e-12)


def test_discrepancy_means_vanish(model):
    np.testing.assert_allclose(model.I1.mean(axis=(-2, -1)), 0, atol=1e-12)
    np.testing.assert_allclose(model.I3.mean(axis=(-2, -1)), 0, atol=1e-12)
    np.testing.assert_allclose(model.I2.values.mean(axis=(-2, -1)), 0, atol=1e-12)
    assert model.I2.measured_mean <= 1e-9


@pytest.mark.parametrize("m", [1, 2, 3])
def test_flux_corrector_checks(model, m):
    assert model.checks[f"skew_E{m}"] <= 1e-12
    assert model.checks[f"flux_identity_{m}"] <= 1e-9
    assert model.checks[f"pressure_link_{m}"] <= 1e-9


def test_table_is_row_major(model):
    rows = model.effective.table()
    assert len(rows) == 16
    assert rows[1][:4] == (0, 0, 0, 1)
    assert rows[5][4] == model.a_hat[0, 1, 0, 1]


def test_flux_correctors_reject_nonzero_mean():
    I = np.ones((2, 2, 2, 2, 8, 8))
    with pytest.raises(MeanNotZero):
        build_flux_correctors(I, PeriodicGrid(2, 8), 1)


def test_flux_correctors_recover_manufactured_tensor():
    g = PeriodicGrid(2, 8)
    sp = Spectral(g)
    x = g.coords()
    E = np.zeros((2, 2, 2, 2, 2, 8, 8))
    E[0, 1, 0, 1, 1] = np.sin(2 * np.pi * (x[0] + 2 * x[1]))
    E[1, 0] = -E[0, 1]
    q = np.zeros((2, 2, 2, 8, 8))
    q[1, 0, 1] = np.cos(2 * np.pi * x[1])
    I = sum(sp.grad(E[h])[..., h, :, :] for h in range(2))
    I = I + np.moveaxis(sp.grad(q), -3, 2)
    fc = build_flux_correctors(I, g, 1)
    assert flux_identity_residual(fc, I) <= 1e-12
    assert fc.nyquist_remainder <= 1e-14
