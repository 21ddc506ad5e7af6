"""Imaging metrics: SSIM against the per-window oracle and closed forms,
MAE/MSE, spatial gradients, softmax, KL divergence contracts."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import darklight.tensor as T
from darklight import metrics
import oracles
from test_tensor import grad_check


class TestSsimConfig:
    def test_defaults(self):
        cfg = metrics.SsimConfig()
        assert cfg.window == 11 and cfg.sigma == 1.5
        assert cfg.c1 == pytest.approx(1e-4) and cfg.c2 == pytest.approx(9e-4)

    def test_from_range(self):
        cfg = metrics.SsimConfig.from_range(d=255.0)
        assert cfg.c1 == pytest.approx((0.01 * 255) ** 2)
        assert cfg.c2 == pytest.approx((0.03 * 255) ** 2)

    @pytest.mark.parametrize("window", [2, 4, 1, -3])
    def test_bad_window_rejected(self, window):
        with pytest.raises(ValueError):
            metrics.SsimConfig(window=window)

    def test_bad_constants_rejected(self):
        with pytest.raises(ValueError):
            metrics.SsimConfig(c1=0.0)


class TestGaussianWindow:
    def test_normalized_and_symmetric(self):
        g = metrics.gaussian_window(11, 1.5)
        assert g.shape == (11, 11)
        assert g.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(g, g.T, atol=0)
        np.testing.assert_allclose(g, g[::-1, ::-1], atol=0)
        assert g[5, 5] == g.max()

    def test_matches_reference(self):
        np.testing.assert_allclose(
            metrics.gaussian_window(11, 1.5), oracles.gaussian_window_ref(11, 1.5), atol=1e-15
        )


class TestSsim:
    def test_identical_images_score_one(self, rng):
        x = rng.random((3, 16, 16))
        assert float(metrics.ssim(x, x).data) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images_closed_form(self):
        a = np.full((1, 12, 12), 0.25)
        b = np.full((1, 12, 12), 0.75)
        got = float(metrics.ssim(a, b).data)
        want = (2 * 0.25 * 0.75 + 1e-4) / (0.25**2 + 0.75**2 + 1e-4)
        assert got == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("shape", [(13, 13), (2, 14, 12), (2, 2, 12, 13)])
    def test_matches_window_oracle(self, rng, shape):
        a = rng.random(shape)
        b = np.clip(a + 0.15 * rng.standard_normal(shape), 0, 1)
        got = float(metrics.ssim(a, b).data)
        want = oracles.ssim_reference(a, b)
        assert got == pytest.approx(want, abs=1e-10)

    def test_symmetry(self, rng):
        a, b = rng.random((2, 13, 13)), rng.random((2, 13, 13))
        s1 = float(metrics.ssim(a, b).data)
        s2 = float(metrics.ssim(b, a).data)
        assert s1 == pytest.approx(s2, abs=1e-12)

    def test_bounded_above_by_one(self, rng):
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert float(metrics.ssim(a, b).data) <= 1.0 + 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            metrics.ssim(np.zeros((12, 12)), np.zeros((12, 13)))

    def test_image_smaller_than_window_rejected(self):
        with pytest.raises(ValueError, match="window"):
            metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_gradients_match_fd(self, rng):
        a = rng.random((1, 13, 13))
        b = rng.random((1, 13, 13))
        grad_check(lambda ts: metrics.ssim(ts[0], ts[1]), [a, b], tol=2e-5)

    def test_noise_lowers_score(self, rng):
        a = rng.random((1, 20, 20))
        mild = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
        heavy = np.clip(a + 0.5 * rng.standard_normal(a.shape), 0, 1)
        assert float(metrics.ssim(a, mild).data) > float(metrics.ssim(a, heavy).data)


class TestPixelLosses:
    def test_mae_mse_values(self, rng):
        a, b = rng.random((3, 5, 5)), rng.random((3, 5, 5))
        assert float(metrics.mae(a, b).data) == pytest.approx(np.abs(a - b).mean(), rel=1e-14)
        assert float(metrics.mse(a, b).data) == pytest.approx(((a - b) ** 2).mean(), rel=1e-14)

    def test_shape_strictness(self):
        with pytest.raises(ValueError):
            metrics.mae(np.zeros((2, 3)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            metrics.mse(np.zeros(3), np.zeros(4))

    def test_gradients(self, rng):
        a, b = rng.random((2, 4)) + 0.2, rng.random((2, 4)) - 0.2
        grad_check(lambda ts: metrics.mae(ts[0], ts[1]), [a, b])
        grad_check(lambda ts: metrics.mse(ts[0], ts[1]), [a, b])


class TestSpatialGradient:
    def test_forward_values(self):
        img = np.array([[0.0, 1.0, 3.0], [2.0, 2.0, 2.0], [5.0, 4.0, 3.0]])
        gx, gy = metrics.spatial_gradient(img)
        np.testing.assert_array_equal(gx.data, [[1, 2, 0], [0, 0, 0], [-1, -1, 0]])
        np.testing.assert_array_equal(gy.data, [[2, 1, -1], [3, 2, 1], [0, 0, 0]])

    def test_batched_shapes_kept(self, rng):
        img = rng.random((2, 3, 6, 7))
        gx, gy = metrics.spatial_gradient(img)
        assert gx.shape == img.shape and gy.shape == img.shape

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            metrics.spatial_gradient(np.zeros((1, 5)))


class TestSoftmax:
    def test_matches_reference(self, rng):
        v = rng.standard_normal(9) * 3
        np.testing.assert_allclose(
            metrics.softmax(v).data, oracles.softmax_reference(v), atol=1e-15
        )

    def test_large_values_stable(self):
        v = np.array([1000.0, 1000.0, 999.0])
        with np.errstate(over="raise"):
            p = metrics.softmax(v).data
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_batched_rows_each_normalize(self, rng):
        v = rng.standard_normal((4, 6))
        p = metrics.softmax(v).data
        np.testing.assert_allclose(p.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_gradients(self, rng):
        v = rng.standard_normal(6)
        w = rng.random(6)
        grad_check(lambda ts: T.tsum(metrics.softmax(ts[0]) * w), [v])


class TestKlDivergence:
    def test_reference_value(self):
        p = np.array([0.5, 0.3, 0.2])
        q = np.array([0.4, 0.4, 0.2])
        got = float(metrics.kl_divergence(p, q).data)
        assert got == pytest.approx(oracles.kl_reference(p, q), abs=1e-14)

    def test_self_divergence_zero(self, rng):
        p = rng.random(8) + 0.1
        p /= p.sum()
        assert float(metrics.kl_divergence(p, p).data) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_nonnegative(self, seed):
        r = np.random.default_rng(seed)
        p = r.random(6) + 1e-3
        q = r.random(6) + 1e-3
        p, q = p / p.sum(), q / q.sum()
        assert float(metrics.kl_divergence(p, q).data) >= -1e-12

    def test_strict_contracts(self):
        ok = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            metrics.kl_divergence(ok, np.array([0.5, 0.25, 0.25]))  # length
        with pytest.raises(ValueError):
            metrics.kl_divergence(np.array([1.0, 0.0]), ok)  # zero entry
        with pytest.raises(ValueError):
            metrics.kl_divergence(np.array([0.6, 0.5]), ok)  # sums to 1.1
        with pytest.raises(ValueError):
            metrics.kl_divergence(np.ones((2, 2)) / 4, np.ones((2, 2)) / 4)  # rank

    def test_sum_tolerance_boundary(self):
        p = np.array([0.5 + 4e-10, 0.5])  # inside the 1e-9 budget
        q = np.array([0.5, 0.5])
        metrics.kl_divergence(p / 1.0, q)  # should not raise

    def test_gradients_through_softmax(self, rng):
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        grad_check(
            lambda ts: metrics.kl_divergence(metrics.softmax(ts[0]), metrics.softmax(ts[1])),
            [a, b],
            tol=1e-6,
        )
