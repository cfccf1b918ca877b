"""Convolution, activations, loss and Adam against independent oracles."""

import numpy as np
import pytest

from spectraflake.nn import (
    AdamState,
    ConvLayer,
    activation_backward,
    activation_forward,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    glorot_uniform,
    softmax,
    softmax_xent,
)


def naive_conv(x, weights, biases):
    """Six explicit loops; the reference the fast path must reproduce."""
    h, w, cin = x.shape
    o, kh, kw, _ = weights.shape
    out = np.zeros((h, w, o))
    for y in range(h):
        for xx in range(w):
            for oo in range(o):
                acc = float(biases[oo])
                for dy in range(kh):
                    for dx in range(kw):
                        yy, xc = y + dy - kh // 2, xx + dx - kw // 2
                        if 0 <= yy < h and 0 <= xc < w:
                            for c in range(cin):
                                acc += float(x[yy, xc, c]) * float(weights[oo, dy, dx, c])
                out[y, xx, oo] = acc
    return out


def fd_gradients(objective, array, delta=1e-3):
    """Central finite differences of a scalar objective over a float array."""
    grad = np.zeros(array.shape)
    flat = array.reshape(-1)
    for i in range(flat.size):
        base = flat[i]
        flat[i] = base + delta
        hi = objective()
        flat[i] = base - delta
        lo = objective()
        flat[i] = base
        grad.reshape(-1)[i] = (hi - lo) / (2 * delta)
    return grad


def rel_err(got, want):
    scale = max(float(np.abs(want).max()), 1e-6)
    return float(np.abs(got - want).max()) / scale


class TestConvForward:
    def test_1x1_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.random((4, 5, 3), dtype=np.float32)
        w = np.zeros((1, 1, 1, 3), np.float32)
        w[0, 0, 0, 0] = 1.0
        out = conv2d_forward(x, ConvLayer(w, np.zeros(1, np.float32)))
        assert np.allclose(out[:, :, 0], x[:, :, 0], atol=1e-7)

    def test_3x3_ones_zero_padding_arithmetic(self):
        x = np.ones((5, 5, 1), np.float32)
        layer = ConvLayer(np.ones((1, 3, 3, 1), np.float32), np.zeros(1, np.float32))
        out = conv2d_forward(x, layer)[:, :, 0]
        assert out[2, 2] == 9.0
        assert out[0, 0] == 4.0
        assert out[0, 2] == 6.0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_naive_loops(self, seed):
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        x = rng.standard_normal((h, w, cin)).astype(np.float32)
        layer = ConvLayer(
            rng.standard_normal((cout, k, k, cin)).astype(np.float32),
            rng.standard_normal(cout).astype(np.float32),
        )
        assert rel_err(conv2d_forward(x, layer), naive_conv(x, layer.weights, layer.biases)) <= 1e-5

    def test_channel_mismatch(self):
        layer = ConvLayer(np.ones((1, 1, 1, 3), np.float32), np.zeros(1, np.float32))
        with pytest.raises(ValueError, match="channels"):
            conv2d_forward(np.ones((2, 2, 2), np.float32), layer)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            ConvLayer(np.ones((1, 2, 2, 1), np.float32), np.zeros(1, np.float32))


class TestConvBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(1)
        x = rng.random((3, 3, 2), dtype=np.float32)
        layer = ConvLayer(rng.random((2, 3, 3, 2)).astype(np.float32), np.zeros(2, np.float32))
        gx, gw, gb = conv2d_backward(x, layer, np.zeros((3, 3, 2), np.float32))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_1x1_closed_form_outer_products(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 4, 3))
        up = rng.standard_normal((4, 4, 2))
        layer = ConvLayer(rng.standard_normal((2, 1, 1, 3)).astype(np.float32),
                          np.zeros(2, np.float32))
        _, gw, gb = conv2d_backward(x, layer, up)
        want_w = np.einsum("yxo,yxc->oc", up, x)
        assert np.allclose(gw[:, 0, 0, :], want_w, atol=1e-6)
        assert np.allclose(gb, up.sum(axis=(0, 1)), atol=1e-6)

    def test_finite_difference_spec_shape(self):
        # 4x4x3 input against a 3x3x3 -> 2 layer, h = 1e-3.
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 4, 3))
        layer = ConvLayer(rng.standard_normal((2, 3, 3, 3)).astype(np.float32),
                          rng.standard_normal(2).astype(np.float32))
        up = rng.standard_normal((4, 4, 2))
        gx, gw, gb = conv2d_backward(x, layer, up)
        objective = lambda: float((conv2d_forward(x, layer) * up).sum())
        assert rel_err(fd_gradients(objective, x), gx) <= 1e-4
        w64 = layer.weights.astype(np.float64)
        layer.weights = w64  # bypass float32 storage for a clean probe
        assert rel_err(fd_gradients(objective, layer.weights), gw) <= 1e-4
        layer.biases = layer.biases.astype(np.float64)
        assert rel_err(fd_gradients(objective, layer.biases), gb) <= 1e-4

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_difference_property(self, seed):
        rng = np.random.default_rng(100 + seed)
        h, w = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        x = rng.standard_normal((h, w, cin))
        layer = ConvLayer(rng.standard_normal((cout, k, k, cin)).astype(np.float32),
                          rng.standard_normal(cout).astype(np.float32))
        layer.weights = layer.weights.astype(np.float64)
        layer.biases = layer.biases.astype(np.float64)
        up = rng.standard_normal((h, w, cout))
        gx, gw, gb = conv2d_backward(x, layer, up)
        objective = lambda: float((conv2d_forward(x, layer) * up).sum())
        assert rel_err(fd_gradients(objective, x), gx) <= 1e-4
        assert rel_err(fd_gradients(objective, layer.weights), gw) <= 1e-4
        assert rel_err(fd_gradients(objective, layer.biases), gb) <= 1e-4

    def test_shape_mismatch(self):
        layer = ConvLayer(np.ones((1, 1, 1, 2), np.float32), np.zeros(1, np.float32))
        with pytest.raises(ValueError, match="grad_out"):
            conv2d_backward(np.ones((2, 2, 2), np.float32), layer,
                            np.ones((2, 3, 1), np.float32))


class TestActivations:
    def test_relu_values(self):
        out = activation_forward("relu", np.array([-1.0, 0.0, 2.0]))
        assert out.tolist() == [0.0, 0.0, 2.0]

    def test_tanh_zero_and_unit_slope(self):
        assert activation_forward("tanh", np.zeros(1))[0] == 0.0
        grad = activation_backward("tanh", np.zeros(1), np.ones(1))
        assert grad[0] == 1.0

    @pytest.mark.parametrize("kind", ["relu", "tanh", "linear"])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_difference(self, kind, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(40) + 0.01  # keep relu kinks away from samples
        up = rng.standard_normal(40)
        out = activation_forward(kind, x)
        got = activation_backward(kind, out, up)
        objective = lambda: float((activation_forward(kind, x) * up).sum())
        assert rel_err(fd_gradients(objective, x, delta=1e-6), got) <= 1e-6

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            activation_forward("sigmoid", np.zeros(1))


class TestSoftmaxXent:
    def test_uniform_logits_cost_ln_n(self):
        loss, _ = softmax_xent(np.zeros((3, 3, 5)), np.zeros((3, 3), np.uint8))
        assert loss == pytest.approx(np.log(5.0), abs=1e-9)

    def test_confident_correct_saturates_to_zero(self):
        logits = np.zeros((1, 1, 5))
        logits[0, 0, 2] = 100.0
        loss, _ = softmax_xent(logits, np.full((1, 1), 2, np.uint8))
        assert loss < 1e-12

    def test_loss_non_negative_and_grad_sums_to_zero(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((5, 4, 3))
        labels = rng.integers(0, 3, (5, 4)).astype(np.uint8)
        loss, grad = softmax_xent(logits, labels)
        assert loss >= 0.0
        assert np.abs(grad.sum(axis=2)).max() <= 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_difference(self, seed):
        rng = np.random.default_rng(40 + seed)
        logits = rng.standard_normal((3, 4, 5))
        labels = rng.integers(0, 5, (3, 4)).astype(np.uint8)
        _, grad = softmax_xent(logits, labels)
        objective = lambda: softmax_xent(logits, labels)[0]
        assert rel_err(fd_gradients(objective, logits), grad) <= 1e-4

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        probs = softmax(rng.standard_normal((6, 7, 4)).astype(np.float32) * 10)
        assert np.abs(probs.sum(axis=-1) - 1.0).max() <= 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="labels"):
            softmax_xent(np.zeros((2, 2, 3)), np.full((2, 2), 3, np.uint8))


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        params = [np.ones(4, np.float32)]
        state = AdamState.init(params, lr=0.1)
        adam_step(params, [np.zeros(4, np.float32)], state)
        assert np.array_equal(params[0], np.ones(4, np.float32))
        assert state.t == 1

    def test_first_step_magnitude_is_lr(self):
        params = [np.zeros(3, np.float32)]
        state = AdamState.init(params, lr=0.01)
        adam_step(params, [np.array([5.0, -2.0, 0.5], np.float32)], state)
        assert np.allclose(np.abs(params[0]), 0.01, rtol=1e-5)

    def test_scalar_quadratic_converges(self):
        # 50 steps on (w - 3)^2 from 0 with lr 0.3 ends within 0.2 of 3.
        params = [np.zeros(1, np.float32)]
        state = AdamState.init(params, lr=0.3)
        for _ in range(50):
            grad = np.array([2.0 * (params[0][0] - 3.0)], np.float32)
            adam_step(params, [grad], state)
        assert abs(params[0][0] - 3.0) < 0.2

    def test_shape_mismatch(self):
        params = [np.zeros(3, np.float32)]
        state = AdamState.init(params)
        with pytest.raises(ValueError, match="shape"):
            adam_step(params, [np.zeros(4, np.float32)], state)

    def test_moments_shaped_like_params(self):
        params = [np.zeros((2, 3), np.float32), np.zeros(5, np.float32)]
        state = AdamState.init(params)
        assert [m.shape for m in state.m] == [(2, 3), (5,)]


class TestInit:
    def test_glorot_limits(self):
        rng = np.random.default_rng(0)
        w = glorot_uniform(rng, 8, 3, 3, 16)
        limit = np.sqrt(6.0 / (3 * 3 * 16 + 3 * 3 * 8))
        assert w.shape == (8, 3, 3, 16)
        assert float(np.abs(w).max()) <= limit
