"""Tests for the differentiable operation set."""

import math

import numpy as np
import pytest

from engine.gradcheck import finite_diff_check
from engine.ops import (
    ConvConfigError,
    conv2d,
    crop_spatial,
    layer_norm,
    linear,
    matmul,
    pixel_shuffle,
    pixel_unshuffle,
    softmax_last,
)
from engine.tensor import DimensionError, Tensor, backward


def _matmul_oracle(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def _conv_oracle(x, w, bias):
    batch, height, width, c_in = x.shape
    k, c_out = w.shape[0], w.shape[3]
    margin = (k - 1) // 2
    out = np.zeros((batch, height, width, c_out))
    for n in range(batch):
        for i in range(height):
            for j in range(width):
                for o in range(c_out):
                    total = bias[o]
                    for di in range(k):
                        for dj in range(k):
                            for c in range(c_in):
                                r, s = i + di - margin, j + dj - margin
                                if 0 <= r < height and 0 <= s < width:
                                    total += x[n, r, s, c] * w[di, dj, c, o]
                    out[n, i, j, o] = total
    return out


class TestMatmul:
    """Test cases for matmul."""

    def test_identity(self, rng):
        """Test I3 x A = A."""
        a = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(a)).data, a)

    def test_column_swap(self):
        """Test multiplying by the swap matrix swaps columns."""
        out = matmul(Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])), Tensor(np.array([[0.0, 1.0], [1.0, 0.0]])))
        np.testing.assert_array_equal(out.data, [[2.0, 1.0], [4.0, 3.0]])

    def test_matches_triple_loop(self, rng):
        """Test a random 4x5 by 5x3 product against the loop oracle."""
        a, b = rng.standard_normal((4, 5)), rng.standard_normal((5, 3))
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, _matmul_oracle(a, b), rtol=1e-12)

    def test_mismatch_names_both_shapes(self):
        """Test the error message names both operand shapes."""
        with pytest.raises(DimensionError) as exc_info:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
        assert '(2, 3)' in str(exc_info.value)
        assert '(4, 5)' in str(exc_info.value)

    def test_linear_with_bias(self, rng):
        """Test linear equals x @ W + b."""
        x, w, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5)), rng.standard_normal(5)
        np.testing.assert_allclose(linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w + b, rtol=1e-12)


class TestSoftmax:
    """Test cases for softmax_last."""

    def test_uniform(self):
        """Test equal logits give a uniform distribution."""
        np.testing.assert_allclose(softmax_last(Tensor(np.zeros(4))).data, [0.25] * 4)

    def test_large_logits_do_not_overflow(self):
        """Test max-subtraction keeps [1000, 1000] finite."""
        np.testing.assert_allclose(softmax_last(Tensor(np.array([1000.0, 1000.0]))).data, [0.5, 0.5])

    def test_hand_evaluation(self):
        """Test [0, ln 3] gives [0.25, 0.75]."""
        out = softmax_last(Tensor(np.array([0.0, math.log(3.0)]))).data
        np.testing.assert_allclose(out, [0.25, 0.75], rtol=1e-12)

    def test_rows_sum_to_one(self, rng):
        """Test slices sum to one even with entries of magnitude 1e3."""
        out = softmax_last(Tensor(rng.uniform(-1000, 1000, (8, 7)))).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)


class TestLayerNorm:
    """Test cases for layer_norm."""

    def test_constant_vector_gives_zeros(self):
        """Test zero variance is absorbed by eps."""
        out = layer_norm(Tensor(np.full((2, 4), 3.0)), Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_two_values(self):
        """Test [1, 3] normalizes to [-1, 1]."""
        out = layer_norm(Tensor(np.array([1.0, 3.0])), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], rtol=1e-9)

    def test_zero_gain_gives_bias(self, rng):
        """Test gain 0 maps every position to the bias."""
        bias = rng.standard_normal(5)
        out = layer_norm(Tensor(rng.standard_normal((3, 5))), Tensor(np.zeros(5)), Tensor(bias))
        np.testing.assert_array_equal(out.data, np.broadcast_to(bias, (3, 5)))

    def test_moments(self, rng):
        """Test per-position mean 0 and variance 1 before the affine map."""
        out = layer_norm(Tensor(rng.standard_normal((6, 16)) * 4 + 2), Tensor(np.ones(16)), Tensor(np.zeros(16))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)

    def test_non_positive_eps_raises(self):
        """Test eps must be positive."""
        with pytest.raises(ValueError):
            layer_norm(Tensor(np.ones(2)), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)


class TestConv2d:
    """Test cases for conv2d."""

    def test_pointwise_identity(self, rng):
        """Test a 1x1 identity kernel reproduces the input."""
        x = rng.standard_normal((2, 3, 3, 4))
        w = np.eye(4).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(w)).data, x)

    def test_zero_kernel_with_bias(self, rng):
        """Test a zero 3x3 kernel with bias c outputs c everywhere."""
        out = conv2d(Tensor(rng.standard_normal((1, 4, 4, 2))), Tensor(np.zeros((3, 3, 2, 3))), Tensor(np.full(3, 0.7)))
        np.testing.assert_array_equal(out.data, np.full((1, 4, 4, 3), 0.7))

    def test_matches_loop_oracle(self, rng):
        """Test a random 1x5x5x2 input with a 3x3x2x3 kernel against the direct loop."""
        x, w, b = rng.standard_normal((1, 5, 5, 2)), rng.standard_normal((3, 3, 2, 3)), rng.standard_normal(3)
        np.testing.assert_allclose(conv2d(Tensor(x), Tensor(w), Tensor(b)).data, _conv_oracle(x, w, b), rtol=1e-12)

    def test_stride_two_shape(self, rng):
        """Test stride 2 with same padding halves even extents."""
        out = conv2d(Tensor(rng.standard_normal((1, 8, 6, 2))), Tensor(rng.standard_normal((3, 3, 2, 4))), stride=2)
        assert out.shape == (1, 4, 3, 4)

    def test_unsupported_kernel_raises(self):
        """Test k=5 is a configuration error."""
        with pytest.raises(ConvConfigError):
            conv2d(Tensor(np.zeros((1, 5, 5, 1))), Tensor(np.zeros((5, 5, 1, 1))))

    def test_unsupported_stride_raises(self):
        """Test stride 3 is a configuration error."""
        with pytest.raises(ConvConfigError):
            conv2d(Tensor(np.zeros((1, 6, 6, 1))), Tensor(np.zeros((3, 3, 1, 1))), stride=3)


class TestPixelShuffle:
    """Test cases for pixel_shuffle and pixel_unshuffle."""

    def test_r1_identity(self, rng):
        """Test r=1 leaves the tensor unchanged."""
        x = rng.standard_normal((1, 2, 3, 4))
        np.testing.assert_array_equal(pixel_shuffle(Tensor(x), 1).data, x)

    def test_sub_pixel_order(self):
        """Test channels [a, b, c, d] land at [[a, b], [c, d]]."""
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 1, 4)
        out = pixel_shuffle(Tensor(x), 2).data
        np.testing.assert_array_equal(out[0, :, :, 0], [[1.0, 2.0], [3.0, 4.0]])

    def test_round_trip_exact(self, rng):
        """Test unshuffle inverts shuffle exactly."""
        x = rng.standard_normal((2, 3, 2, 12))
        np.testing.assert_array_equal(pixel_unshuffle(pixel_shuffle(Tensor(x), 2), 2).data, x)

    def test_divisibility_error(self):
        """Test channels not divisible by r^2 raise DimensionError."""
        with pytest.raises(DimensionError):
            pixel_shuffle(Tensor(np.zeros((1, 2, 2, 3))), 2)


class TestCropSpatial:
    """Test cases for crop_spatial."""

    def test_backward_zero_fills(self, rng):
        """Test the cropped-away region gets zero gradient."""
        x = Tensor(rng.standard_normal((1, 4, 4, 2)), requires_grad=True)
        grads = backward(crop_spatial(x, 3, 2).sum())
        expected = np.zeros((1, 4, 4, 2))
        expected[:, :3, :2, :] = 1.0
        np.testing.assert_array_equal(grads[x], expected)


class TestFiniteDiffCheck:
    """Test cases for finite_diff_check."""

    def test_identity_has_no_error(self, rng):
        """Test the identity map checks out."""
        assert finite_diff_check(lambda t: t, Tensor(rng.standard_normal(5))) <= 1e-8

    def test_softmax_six_vector(self, rng):
        """Test softmax_last on a 6-vector is within 1e-6."""
        assert finite_diff_check(softmax_last, Tensor(rng.standard_normal(6))) <= 1e-6

    def test_restores_inputs(self, rng):
        """Test inputs come back unmodified with their grad flag."""
        data = rng.standard_normal(4)
        x = Tensor(data.copy())
        finite_diff_check(lambda t: t * t, x)
        np.testing.assert_array_equal(x.data, data)
        assert not x.requires_grad
