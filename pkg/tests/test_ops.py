"""Convolution/pooling/activation kernels against brute-force oracles."""

import numpy as np
import pytest

from sepsenet import ops
from sepsenet.errors import ChannelMismatch, ShapeMismatch, WindowTooLarge

import oracles


def random_case(rng, max_hw=8, max_c=4):
    n = int(rng.integers(1, 3))
    h = int(rng.integers(3, max_hw + 1))
    w = int(rng.integers(3, max_hw + 1))
    c = int(rng.integers(1, max_c + 1))
    return n, h, w, c


class TestGeometry:
    def test_valid_output_size(self):
        g = ops.ConvGeometry(kernel=(3, 3), stride=(1, 1), padding="valid")
        assert g.out_hw(5, 7) == (3, 5)

    def test_same_output_size_is_ceil(self):
        g = ops.ConvGeometry(kernel=(3, 3), stride=(2, 2), padding="same")
        assert g.out_hw(5, 6) == (3, 3)

    def test_same_padding_split_floor_left(self):
        g = ops.ConvGeometry(kernel=(3, 3), stride=(2, 2), padding="same")
        # in=6: out=3, total = 2*2+3-6 = 1 -> (0 top, 1 bottom)
        assert g.pad_amounts(6, 6) == (0, 1, 0, 1)

    def test_kernel_larger_than_valid_input(self):
        g = ops.ConvGeometry(kernel=(3, 3), padding="valid")
        with pytest.raises(ShapeMismatch):
            g.out_hw(2, 5)

    def test_bad_padding_rejected(self):
        with pytest.raises(ValueError):
            ops.ConvGeometry(padding="full")


class TestDepthwise:
    def test_identity_kernel(self, rng):
        x = rng.random((1, 3, 3, 1)).astype(np.float32)
        k = np.zeros((3, 3, 1), dtype=np.float32)
        k[1, 1, 0] = 1.0
        out = ops.depthwise_conv2d(x, k, ops.ConvGeometry(padding="same"))
        assert np.array_equal(out, x)

    def test_all_ones_kernel_valid(self):
        x = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3, 1)
        k = np.ones((3, 3, 1), dtype=np.float32)
        out = ops.depthwise_conv2d(x, k, ops.ConvGeometry(padding="valid"))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 45.0

    def test_channels_never_mix(self, rng):
        x = rng.random((1, 4, 4, 2))
        x2 = x.copy()
        x2[..., 1] = 99.0  # perturb only channel 1
        k = rng.random((3, 3, 2))
        g = ops.ConvGeometry(padding="same")
        a = ops.depthwise_conv2d(x, k, g)
        b = ops.depthwise_conv2d(x2, k, g)
        assert np.array_equal(a[..., 0], b[..., 0])

    def test_channel_mismatch(self, rng):
        with pytest.raises(ChannelMismatch):
            ops.depthwise_conv2d(rng.random((1, 4, 4, 3)), rng.random((3, 3, 2)),
                                 ops.ConvGeometry())

    def test_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 5, 5, 2))
        k = rng.uniform(-1, 1, (3, 3, 2))
        out = ops.depthwise_conv2d(x, k, ops.ConvGeometry(padding="same"))
        ref = oracles.naive_depthwise(x, k, padding="same")
        np.testing.assert_allclose(out, ref, atol=1e-6)

    def test_backward_matches_finite_differences(self, rng):
        x = rng.uniform(-1, 1, (2, 5, 5, 2))
        k = rng.uniform(-1, 1, (3, 3, 2))
        geom = ops.ConvGeometry(stride=(2, 2), padding="same")
        proj = rng.standard_normal(ops.depthwise_conv2d(x, k, geom).shape)
        dx, dk = ops.depthwise_conv2d_backward(proj, x, k, geom)

        def loss():
            return float((ops.depthwise_conv2d(x, k, geom) * proj).sum())

        np.testing.assert_allclose(dx, oracles.central_difference(loss, x), atol=1e-6)
        np.testing.assert_allclose(dk, oracles.central_difference(loss, k), atol=1e-6)


class TestPointwise:
    def test_channel_sum(self, rng):
        x = rng.random((1, 3, 3, 2)).astype(np.float32)
        w = np.ones((2, 1), dtype=np.float32)
        b = np.zeros(1, dtype=np.float32)
        out = ops.pointwise_conv2d(x, w, b)
        np.testing.assert_allclose(out[..., 0], x.sum(axis=-1), rtol=1e-6)

    def test_identity_weights(self, rng):
        x = rng.random((2, 3, 3, 4)).astype(np.float32)
        out = ops.pointwise_conv2d(x, np.eye(4, dtype=np.float32), np.zeros(4, dtype=np.float32))
        assert np.array_equal(out, x)

    def test_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 4, 4, 3))
        w = rng.uniform(-1, 1, (3, 5))
        b = rng.uniform(-1, 1, 5)
        np.testing.assert_allclose(
            ops.pointwise_conv2d(x, w, b), oracles.naive_pointwise(x, w, b), atol=1e-6
        )

    def test_channel_mismatch(self, rng):
        with pytest.raises(ChannelMismatch):
            ops.pointwise_conv2d(rng.random((1, 2, 2, 3)), rng.random((4, 5)), np.zeros(5))


class TestSeparable:
    def test_bit_equal_to_composition(self, rng):
        x = rng.random((2, 6, 6, 3)).astype(np.float32)
        dw = rng.random((3, 3, 3)).astype(np.float32)
        pw = rng.random((3, 8)).astype(np.float32)
        b = rng.random(8).astype(np.float32)
        geom = ops.ConvGeometry(padding="same")
        fused = ops.separable_conv2d(x, dw, pw, b, geom)
        composed = ops.pointwise_conv2d(ops.depthwise_conv2d(x, dw, geom), pw, b)
        assert np.array_equal(fused, composed)

    def test_zero_pointwise_gives_zero(self, rng):
        x = rng.random((1, 4, 4, 2)).astype(np.float32)
        out = ops.separable_conv2d(
            x,
            rng.random((3, 3, 2)).astype(np.float32),
            np.zeros((2, 6), dtype=np.float32),
            np.zeros(6, dtype=np.float32),
            ops.ConvGeometry(),
        )
        assert np.all(out == 0)

    def test_first_layer_shape(self, rng):
        # 150x150x3 in, 32 filters of 3x3, same padding -> 150x150x32 out
        x = rng.random((1, 150, 150, 3)).astype(np.float32)
        out = ops.separable_conv2d(
            x,
            rng.random((3, 3, 3)).astype(np.float32),
            rng.random((3, 32)).astype(np.float32),
            np.zeros(32, dtype=np.float32),
            ops.ConvGeometry(kernel=(3, 3), padding="same"),
        )
        assert out.shape == (1, 150, 150, 32)


class TestStandardConv:
    def test_single_channel_reduces_to_depthwise(self, rng):
        x = rng.uniform(-1, 1, (1, 5, 5, 1))
        k = rng.uniform(-1, 1, (3, 3, 1, 1))
        geom = ops.ConvGeometry(padding="same")
        full = ops.standard_conv2d(x, k, np.zeros(1), geom)
        dw = ops.depthwise_conv2d(x, k[:, :, :, 0], geom)
        np.testing.assert_allclose(full, dw, atol=1e-12)

    def test_1x1_kernel_equals_pointwise(self, rng):
        x = rng.uniform(-1, 1, (1, 4, 4, 3))
        w = rng.uniform(-1, 1, (3, 5))
        b = rng.uniform(-1, 1, 5)
        geom = ops.ConvGeometry(kernel=(1, 1), padding="valid")
        full = ops.standard_conv2d(x, w[None, None], b, geom)
        np.testing.assert_allclose(full, ops.pointwise_conv2d(x, w, b), atol=1e-12)

    def test_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, (1, 6, 6, 2))
        k = rng.uniform(-1, 1, (3, 3, 2, 3))
        b = rng.uniform(-1, 1, 3)
        geom = ops.ConvGeometry(padding="valid")
        np.testing.assert_allclose(
            ops.standard_conv2d(x, k, b, geom),
            oracles.naive_standard_conv(x, k, b, padding="valid"),
            atol=1e-6,
        )

    def test_backward_matches_finite_differences(self, rng):
        x = rng.uniform(-1, 1, (1, 5, 5, 2))
        k = rng.uniform(-1, 1, (3, 3, 2, 3))
        b = rng.uniform(-1, 1, 3)
        geom = ops.ConvGeometry(padding="same", stride=(2, 2))
        proj = rng.standard_normal(ops.standard_conv2d(x, k, b, geom).shape)
        dx, dk, db = ops.standard_conv2d_backward(proj, x, k, geom)

        def loss():
            return float((ops.standard_conv2d(x, k, b, geom) * proj).sum())

        np.testing.assert_allclose(dx, oracles.central_difference(loss, x), atol=1e-6)
        np.testing.assert_allclose(dk, oracles.central_difference(loss, k), atol=1e-6)
        np.testing.assert_allclose(db, oracles.central_difference(loss, b), atol=1e-6)


class TestMaxPool:
    def test_two_by_two(self):
        x = np.array([[1, 2], [3, 4]], dtype=np.float32).reshape(1, 2, 2, 1)
        out, _ = ops.max_pool2d(x, (2, 2), (2, 2))
        assert out[0, 0, 0, 0] == 4

    def test_constant_input(self):
        x = np.full((1, 6, 6, 2), 3.5, dtype=np.float32)
        out, _ = ops.max_pool2d(x, (2, 2), (2, 2))
        assert out.shape == (1, 3, 3, 2)
        assert np.all(out == 3.5)

    def test_150_to_75(self, rng):
        x = rng.random((1, 150, 150, 1)).astype(np.float32)
        out, _ = ops.max_pool2d(x, (2, 2), (2, 2))
        assert out.shape == (1, 75, 75, 1)

    def test_matches_oracle_and_remainder_dropped(self, rng):
        x = rng.uniform(-1, 1, (2, 7, 5, 3))
        out, _ = ops.max_pool2d(x, (2, 2), (2, 2))
        assert out.shape == (2, 3, 2, 3)
        np.testing.assert_array_equal(out, oracles.naive_maxpool(x, (2, 2), (2, 2)))

    def test_window_too_large(self, rng):
        with pytest.raises(WindowTooLarge):
            ops.max_pool2d(rng.random((1, 3, 3, 1)), (4, 4), (1, 1))

    def test_backward_routes_each_grad_once(self, rng):
        x = rng.standard_normal((2, 6, 6, 3))
        out, argmax = ops.max_pool2d(x, (2, 2), (2, 2))
        grad = rng.standard_normal(out.shape)
        dx = ops.max_pool2d_backward(grad, argmax, x.shape, (2, 2), (2, 2))
        # total gradient mass preserved, and each window routes to one spot
        np.testing.assert_allclose(dx.sum(), grad.sum(), rtol=1e-12)
        assert np.count_nonzero(dx) <= grad.size

    def test_tie_breaks_to_first_position(self):
        x = np.full((1, 2, 2, 1), 7.0)
        out, argmax = ops.max_pool2d(x, (2, 2), (2, 2))
        grad = np.ones_like(out)
        dx = ops.max_pool2d_backward(grad, argmax, x.shape, (2, 2), (2, 2))
        assert dx[0, 0, 0, 0] == 1.0 and dx.sum() == 1.0


class TestGlobalAvgPool:
    def test_constant(self):
        x = np.full((2, 3, 4, 5), 1.25, dtype=np.float32)
        assert np.all(ops.global_avg_pool(x) == 1.25)

    def test_small_example(self):
        x = np.array([[1, 2], [3, 4]], dtype=np.float32).reshape(1, 2, 2, 1)
        assert ops.global_avg_pool(x)[0, 0] == 2.5

    def test_matches_oracle(self, rng):
        x = rng.uniform(-1, 1, (2, 7, 5, 3))
        np.testing.assert_allclose(ops.global_avg_pool(x), oracles.naive_gap(x), atol=1e-6)

    def test_backward_uniform_and_mass_preserving(self, rng):
        grad = rng.standard_normal((2, 4))
        dx = ops.global_avg_pool_backward(grad, (2, 3, 5, 4))
        np.testing.assert_allclose(dx.sum(axis=(1, 2)), grad, rtol=1e-12)
        assert np.all(dx == dx[:, :1, :1, :])  # uniform over spatial positions


class TestActivations:
    def test_relu_values(self):
        np.testing.assert_array_equal(
            ops.relu(np.array([-1.0, 0.0, 2.0])), np.array([0.0, 0.0, 2.0])
        )

    def test_relu_backward_subgradient_zero_at_zero(self):
        x = np.array([-1.0, 0.0, 2.0])
        grad = np.array([5.0, 5.0, 5.0])
        np.testing.assert_array_equal(ops.relu_backward(x, grad), [0.0, 0.0, 5.0])

    def test_relu_idempotent(self, rng):
        x = rng.standard_normal(100)
        np.testing.assert_array_equal(ops.relu(ops.relu(x)), ops.relu(x))

    def test_sigmoid_center(self):
        assert ops.sigmoid(np.array([0.0]))[0] == 0.5

    def test_sigmoid_extremes_no_overflow(self):
        # float32 main path saturates exactly; float64 stays finite & tiny
        out32 = ops.sigmoid(np.array([500.0, -500.0], dtype=np.float32))
        assert out32[0] == 1.0 and out32[1] == 0.0
        out64 = ops.sigmoid(np.array([500.0, -500.0]))
        assert np.all(np.isfinite(out64))
        assert out64[0] == 1.0 and out64[1] < 1e-200

    def test_sigmoid_symmetry(self, rng):
        x = rng.uniform(-20, 20, 1000)
        np.testing.assert_allclose(ops.sigmoid(-x), 1.0 - ops.sigmoid(x), atol=1e-7)


class TestSoftmax:
    def test_uniform_logits(self):
        out = ops.softmax(np.zeros((1, 4)))
        np.testing.assert_allclose(out, 0.25)

    def test_shift_invariance(self, rng):
        z = rng.standard_normal((5, 4))
        np.testing.assert_allclose(ops.softmax(z), ops.softmax(z + 13.7), atol=1e-6)

    def test_extreme_logits_stable(self):
        out = ops.softmax(np.array([[1000.0, 0.0, 0.0, 0.0]]))
        assert not np.any(np.isnan(out))
        np.testing.assert_allclose(out, [[1.0, 0.0, 0.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one(self, rng):
        z = rng.uniform(-1000, 1000, (50, 6))
        np.testing.assert_allclose(ops.softmax(z).sum(axis=1), 1.0, atol=1e-6)
