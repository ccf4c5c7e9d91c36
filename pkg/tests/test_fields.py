import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_scale_spec
from reistokes.errors import EllipticityViolation, GridError
from reistokes.fields import (CoefficientSpec, CoefficientTerm, MacroGrid, PeriodicGrid,
                              check_ellipticity, identity_tensor, sample_coefficient,
                              tensor_to_matrix, transpose_tensor)


class TestGrids:
    def test_periodic_grid_basics(self):
        g = PeriodicGrid(2, 8)
        assert g.spacing == 0.125
        assert g.shape == (8, 8)
        assert g.size == 64
        assert g.coords().shape == (2, 8, 8)
        assert g.coords1d()[1] == 0.125

    @pytest.mark.parametrize("dim,points", [(1, 8), (4, 8), (2, 6), (2, 2)])
    def test_bad_grids(self, dim, points):
        with pytest.raises(GridError):
            PeriodicGrid(dim, points)

    def test_macro_square_uses_cell_centres(self):
        m = MacroGrid("square", 4)
        np.testing.assert_allclose(m.coords1d(), [0.125, 0.375, 0.625, 0.875])
        assert m.dist_to_boundary().min() == pytest.approx(0.125)

    def test_macro_bad_kind(self):
        with pytest.raises(GridError):
            MacroGrid("disk", 16)

    def test_torus_gradient_is_spectral(self):
        m = MacroGrid("torus", 32)
        x = m.coords()
        f = np.sin(2 * np.pi * 3 * x[1])
        g = m.gradient(f)
        np.testing.assert_allclose(g[1], 6 * np.pi * np.cos(6 * np.pi * x[1]), atol=1e-10)
        np.testing.assert_allclose(g[0], 0, atol=1e-10)

    def test_integrate_constant(self):
        for kind in ("torus", "square"):
            assert MacroGrid(kind, 16).integrate(np.ones((16, 16))) == pytest.approx(1.0)


class TestTensors:
    def test_identity_action(self):
        d = identity_tensor(2)
        G = np.arange(4.0).reshape(2, 2)
        np.testing.assert_allclose(np.einsum("ijab,bj->ai", d, G), G)

    def test_transpose_involution(self):
        a = np.random.default_rng(0).standard_normal((2,) * 4)
        np.testing.assert_array_equal(transpose_tensor(transpose_tensor(a)), a)

    def test_matrix_form_matches_contraction(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((2,) * 4)
        G = rng.standard_normal((2, 2))
        M = tensor_to_matrix(a)
        direct = np.einsum("ijab,bj->ai", a, G).ravel()
        np.testing.assert_allclose(M @ G.ravel(), direct)


class TestCoefficientSpec:
    def test_scalar_amplitude_becomes_isotropic(self):
        s = CoefficientSpec(2, 0.5, [CoefficientTerm(2.0, (0, 0), (0, 0))])
        np.testing.assert_array_equal(s.terms[0].amplitude, 2 * identity_tensor(2))

    def test_mu_range(self):
        with pytest.raises(ValueError):
            CoefficientSpec(2, 1.5, [])

    def test_wrong_wavevector_length(self):
        with pytest.raises(ValueError):
            CoefficientSpec(2, 0.5, [CoefficientTerm(1.0, (1,), (0, 0))])

    @pytest.mark.parametrize("fy,fz", [("sin", "sin"), ("sin", "cos"), ("cos", "sin"),
                                       ("cos", "cos")])
    def test_products_match_closed_form(self, fy, fz):
        s = CoefficientSpec(2, 0.5, []).add_product(0.7, (1, 2), fy, (2, -1), fz)
        rng = np.random.default_rng(2)
        y, z = rng.uniform(size=(2, 2, 5)), rng.uniform(size=(2, 2, 5))
        fn = {"sin": np.sin, "cos": np.cos}
        want = 0.7 * fn[fy](2 * np.pi * (y[0] + 2 * y[1])) * fn[fz](2 * np.pi * (2 * z[0] - z[1]))
        got = s.evaluate(y, z)
        np.testing.assert_allclose(got[0, 0, 0, 0], want, atol=1e-14)
        np.testing.assert_allclose(got[0, 1, 0, 1], 0, atol=1e-14)

    def test_dependence_flags(self):
        s = two_scale_spec()
        assert s.depends_on_y and s.depends_on_z
        c = CoefficientSpec.constant(identity_tensor(2), 0.5)
        assert not c.depends_on_y and not c.depends_on_z
        assert c.is_symmetric

    def test_macro_evaluation_substitutes_scales(self):
        s = two_scale_spec()
        x = np.array([[0.13], [0.71]])
        eps = 1 / 3
        np.testing.assert_allclose(s.evaluate_macro(x, eps), s.evaluate(x / eps, x / eps ** 2))


class TestEllipticity:
    def test_identity_passes(self):
        rep = check_ellipticity(identity_tensor(2), 0.5)
        assert rep.passed
        assert rep.min_eig == pytest.approx(1.0)

    def test_violation_raises(self):
        with pytest.raises(EllipticityViolation) as exc:
            check_ellipticity(0.1 * identity_tensor(2), 0.5)
        assert exc.value.report is not None
        assert not exc.value.report.passed

    def test_sampled_coefficient_checked(self):
        s = CoefficientSpec(2, 0.9, [CoefficientTerm(1.0, (0, 0), (0, 0))])
        s.add_product(0.5, (1, 0), "cos", (0, 0), "cos")
        with pytest.raises(EllipticityViolation):
            sample_coefficient(s, PeriodicGrid(2, 8), PeriodicGrid(2, 4))

    def test_samples_match_evaluate(self):
        s = two_scale_spec()
        gy, gz = PeriodicGrid(2, 8), PeriodicGrid(2, 4)
        c = sample_coefficient(s, gy, gz)
        y = gy.coords()[:, 3, 5]
        z = gz.coords()[:, 1, 2]
        direct = s.evaluate(y.reshape(2, 1), z.reshape(2, 1))[..., 0]
        np.testing.assert_allclose(c.samples[..., 3, 5, 1, 2], direct, atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, 0.59), st.floats(0.0, 6.28))
    def test_rayleigh_inside_bounds(self, amp, phase):
        s = CoefficientSpec(2, 0.4, [CoefficientTerm(1.0, (0, 0), (0, 0)),
                                     CoefficientTerm(amp, (1, 0), (0, 1), phase)])
        c = sample_coefficient(s, PeriodicGrid(2, 4), PeriodicGrid(2, 4))
        r = c.ellipticity
        assert 0.4 - 1e-12 <= r.min_rayleigh <= r.max_rayleigh <= 2.5
