"""Layers and optimizer: init scaling, bias wiring, Module persistence, and
the adaptive-moment update against a hand-rolled reference."""

import numpy as np
import pytest

import darklight.tensor as T
from darklight import nn


class TestFaninUniform:
    def test_bounds_and_scale(self, rng):
        fan_in = 27
        w = nn.fanin_uniform(rng, (4, 3, 3, 3), fan_in, np.float64)
        limit = np.sqrt(6.0 / fan_in)
        assert np.all(np.abs(w) <= limit)
        # variance of U(-limit, limit) is limit^2/3 = 2/fan_in
        big = nn.fanin_uniform(rng, (200, 200), fan_in, np.float64)
        assert np.var(big) == pytest.approx(2.0 / fan_in, rel=0.05)

    def test_dtype(self, rng):
        assert nn.fanin_uniform(rng, (3,), 9, np.float32).dtype == np.float32


class TestConv2d:
    def test_bias_added_per_channel(self, rng):
        layer = nn.Conv2d(3, 5, 3, padding=1, rng=rng)
        layer.bias.data = np.arange(5, dtype=np.float64)
        x = T.Tensor(rng.random((2, 3, 8, 8)))
        out = layer(x)
        bare = T.conv2d(x, layer.weight, stride=1, padding=1)
        np.testing.assert_allclose(out.data, bare.data + np.arange(5)[None, :, None, None],
                                   rtol=0, atol=0)

    def test_unbatched_input(self, rng):
        layer = nn.Conv2d(3, 4, 3, rng=rng)
        out = layer(T.Tensor(rng.random((3, 8, 8))))
        assert out.shape == (4, 6, 6)

    def test_params(self, rng):
        layer = nn.Conv2d(2, 3, 3, rng=rng)
        assert layer.params() == [layer.weight, layer.bias]
        assert layer.weight.shape == (3, 2, 3, 3)
        assert layer.bias.shape == (3,)


class _OneConv(nn.Module):
    def __init__(self, rng):
        self.layer = nn.Conv2d(2, 2, 3, rng=rng)

    def named_parameters(self):
        return nn.conv_names("layer", self.layer)


class TestModule:
    def test_state_round_trip(self, rng):
        a, b = _OneConv(rng), _OneConv(rng)
        b.layer.weight.data = b.layer.weight.data + 1.0
        b.load_state_arrays(a.state_arrays())
        np.testing.assert_array_equal(a.layer.weight.data, b.layer.weight.data)
        # loaded arrays are copies, not views
        b.layer.weight.data[0, 0, 0, 0] += 5.0
        assert a.layer.weight.data[0, 0, 0, 0] != b.layer.weight.data[0, 0, 0, 0]

    def test_missing_tensor_rejected(self, rng):
        m = _OneConv(rng)
        state = m.state_arrays()
        del state["layer.b"]
        with pytest.raises(ValueError, match="missing"):
            m.load_state_arrays(state)

    def test_shape_mismatch_rejected(self, rng):
        m = _OneConv(rng)
        state = m.state_arrays()
        state["layer.w"] = state["layer.w"][:1]
        with pytest.raises(ValueError, match="shape"):
            m.load_state_arrays(state)

    def test_save_load_file(self, tmp_path, rng):
        m = _OneConv(rng)
        path = tmp_path / "one.w"
        m.save(path, meta={"note": "x"})
        fresh = _OneConv(np.random.default_rng(99))
        meta = fresh.load(path)
        assert meta["note"] == "x"
        np.testing.assert_array_equal(fresh.layer.weight.data, m.layer.weight.data)

    def test_zero_grad(self, rng):
        m = _OneConv(rng)
        m.layer.weight.grad = np.ones_like(m.layer.weight.data)
        m.zero_grad()
        assert m.layer.weight.grad is None


class TestAdam:
    def _reference(self, p0, grads, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
        p, m, v = float(p0), 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        return p

    def test_matches_reference_over_steps(self):
        grads = [0.5, -0.25, 0.1, 0.9]
        p = T.Tensor(np.array([1.0]), requires_grad=True)
        opt = nn.Adam([p], lr=0.1)
        for g in grads:
            p.grad = np.array([g])
            opt.step()
        assert p.data[0] == pytest.approx(self._reference(1.0, grads), abs=1e-12)

    def test_none_grad_skipped(self):
        a = T.Tensor(np.array([1.0]), requires_grad=True)
        b = T.Tensor(np.array([2.0]), requires_grad=True)
        opt = nn.Adam([a, b], lr=0.1)
        a.grad = np.array([1.0])
        opt.step()
        assert a.data[0] != 1.0
        assert b.data[0] == 2.0 and opt.v[1][0] == 0.0

    def test_descends_quadratic(self):
        # minimize (x-3)^2; 300 steps at lr 0.1 should get close
        x = T.Tensor(np.array([0.0]), requires_grad=True)
        opt = nn.Adam([x], lr=0.1)
        for _ in range(300):
            x.grad = 2.0 * (x.data - 3.0)
            opt.step()
        assert abs(x.data[0] - 3.0) < 1e-2

    def test_zero_grad_clears(self):
        p = T.Tensor(np.array([1.0]), requires_grad=True)
        opt = nn.Adam([p])
        p.grad = np.array([1.0])
        opt.zero_grad()
        assert p.grad is None
