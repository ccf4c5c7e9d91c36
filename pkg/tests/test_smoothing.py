import numpy as np
import pytest

from reistokes.errors import EpsilonTooSmall, RTooSmall
from reistokes.fields import MacroGrid, PeriodicGrid
from reistokes.smoothing import (DEFAULT_MOLLIFIER, Mollifier, cutoff, interp_matrix, mollify,
                                 two_scale_eval, two_scale_eval_points)


class TestMollifier:
    def test_stencil_mass_and_support(self):
        m, w = DEFAULT_MOLLIFIER.stencil(1 / 64, 0.25)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(w > 0)
        pts = m * (1 / 64) / 0.25
        r = np.hypot(pts[:, 0] - 1 / 6, pts[:, 1])
        assert r.max() < 1 / 3
        assert np.hypot(pts[:, 0], pts[:, 1]).max() < 0.5

    def test_support_must_fit(self):
        with pytest.raises(ValueError):
            Mollifier(offset=0.3, radius=0.3)

    def test_eps_too_small(self):
        with pytest.raises(EpsilonTooSmall):
            DEFAULT_MOLLIFIER.stencil(0.1, 0.15)

    def test_constants_preserved(self):
        f = np.full((32, 32), 2.5)
        np.testing.assert_allclose(mollify(f, 0.2, 1 / 32), 2.5, atol=1e-14)

    @pytest.mark.parametrize("boundary", ["periodic", "zero"])
    def test_fft_matches_direct(self, boundary):
        f = np.random.default_rng(0).standard_normal((2, 32, 32))
        a = mollify(f, 0.25, 1 / 32, boundary=boundary, method="direct")
        b = mollify(f, 0.25, 1 / 32, boundary=boundary, method="fft")
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_first_order_error_on_smooth_field(self):
        errs = []
        for eps in (0.2, 0.1, 0.05):
            x = PeriodicGrid(2, 128).coords()
            f = np.sin(2 * np.pi * x[0])
            errs.append(np.abs(mollify(f, eps, 1 / 128) - f).max())
        rate = np.log(errs[0] / errs[2]) / np.log(4)
        assert 0.8 < rate < 1.2

    def test_unknown_modes(self):
        with pytest.raises(ValueError):
            mollify(np.zeros((8, 8)), 0.5, 1 / 8, boundary="reflect")
        with pytest.raises(ValueError):
            mollify(np.zeros((8, 8)), 0.5, 1 / 8, method="wavelet")


class TestTwoScaleEval:
    def test_interp_reproduces_samples(self):
        W = interp_matrix(8, np.arange(8) / 8)
        np.testing.assert_allclose(W, np.eye(8), atol=1e-14)

    def test_exact_on_single_mode(self):
        gy, gz = PeriodicGrid(2, 8), PeriodicGrid(2, 8)
        t = np.arange(8) / 8
        g = np.einsum("a,d->ad", np.sin(2 * np.pi * t), np.cos(4 * np.pi * t))
        g = np.broadcast_to(g[:, None, None, :], (8, 8, 8, 8))
        eps = 1 / 3
        macro = MacroGrid("torus", 32)
        x = macro.coords()
        want = np.sin(2 * np.pi * x[0] / eps) * np.cos(4 * np.pi * x[1] / eps ** 2)
        for method in ("separable", "direct"):
            got = two_scale_eval(g, eps, macro, gy, gz, method=method)
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_separable_matches_direct_on_random_data(self):
        gy, gz = PeriodicGrid(2, 8), PeriodicGrid(2, 4)
        g = np.random.default_rng(1).standard_normal((3, 8, 8, 4, 4))
        macro = MacroGrid("square", 16)
        a = two_scale_eval(g, 0.3, macro, gy, gz)
        b = two_scale_eval(g, 0.3, macro, gy, gz, method="direct")
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_points_match_grid(self):
        gy = PeriodicGrid(2, 8)
        g = np.random.default_rng(2).standard_normal((2, 8, 8))
        macro = MacroGrid("torus", 8)
        grid_vals = two_scale_eval(g, 0.4, macro, gy)
        x = macro.coords().reshape(2, -1).T
        pts = two_scale_eval_points(g, 0.4, x, gy)
        np.testing.assert_allclose(pts.reshape(grid_vals.shape), grid_vals, atol=1e-10)


class TestCutoff:
    def test_torus_is_identically_one(self):
        c = cutoff(MacroGrid("torus", 16), 0.1)
        assert np.all(c.values == 1.0)
        assert c.gradient_constant == 0.0

    def test_properties_on_square(self):
        m = MacroGrid("square", 128)
        c = cutoff(m, 0.1)
        assert np.all(c.values[c.inner_mask] == pytest.approx(1.0, abs=1e-14))
        assert np.all(c.values[~c.outer_mask] == 0.0)
        assert 0 <= c.values.min() and c.values.max() <= 1
        assert 0 < c.gradient_constant < 20

    def test_gradient_constant_stable_under_refinement(self):
        a = cutoff(MacroGrid("square", 128), 0.1).gradient_constant
        b = cutoff(MacroGrid("square", 256), 0.1).gradient_constant
        assert abs(a - b) <= 0.2 * a

    def test_r_too_small(self):
        with pytest.raises(RTooSmall):
            cutoff(MacroGrid("square", 16), 0.1)

    def test_empty_interior(self):
        c = cutoff(MacroGrid("square", 64), 0.4)
        assert not c.values.any()
