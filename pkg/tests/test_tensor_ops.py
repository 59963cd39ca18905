"""Forward-value contracts of the tensor ops, checked against independent oracles."""

import numpy as np
import pytest

from geovqa.autodiff import (
    Tensor,
    concat,
    conv2d,
    downsample_nearest,
    gelu,
    log_clamped,
    matmul,
    mean,
    nearest_resize,
    one_hot,
    relu,
    reshape,
    softmax_lastdim,
    tensor_sum,
    transpose,
    upsample_nearest,
)
from geovqa.errors import DataError, NumericsError, ShapeError, UsageError


def conv2d_reference(x, k, stride, padding):
    """Six-loop cross-correlation, the independent oracle for conv2d."""
    B, C, H, W = x.shape
    Co, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((B, Co, Ho, Wo))
    for b in range(B):
        for o in range(Co):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, c, i * stride + u, j * stride + v] * k[o, c, u, v]
                    out[b, o, i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        out = matmul(eye, eye)
        assert np.array_equal(out.data, np.eye(2))

    def test_hand_case(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        out = matmul(a, b)
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_dimension_error_names_both_shapes(self):
        a = Tensor(np.zeros((2, 3)))
        b = Tensor(np.zeros((4, 5)))
        with pytest.raises(ShapeError) as err:
            matmul(a, b)
        assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)

    def test_stacked_broadcast_matches_loop(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4, 5))
        w = rng.normal(size=(5, 2))
        out = matmul(Tensor(a), Tensor(w)).data
        for i in range(3):
            assert np.allclose(out[i], a[i] @ w)


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        out = softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
        assert np.allclose(out.data, [1 / 3] * 3)

    def test_stability_at_extreme_logit(self):
        out = softmax_lastdim(Tensor([1000.0, 0.0, 0.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] > 1.0 - 1e-12

    def test_matches_high_precision_oracle(self):
        # independent evaluation in python floats via math.exp
        import math

        logits = [1.0, 2.0, 3.0]
        exps = [math.exp(v - 3.0) for v in logits]
        total = sum(exps)
        expected = [e / total for e in exps]
        out = softmax_lastdim(Tensor(logits))
        assert np.allclose(out.data, expected, atol=1e-12, rtol=0)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.uniform(-1e3, 1e3, size=(4, 7)))
        out = softmax_lastdim(x)
        assert np.all(out.data >= 0.0)
        assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_empty_last_dim_rejected(self):
        with pytest.raises(ShapeError):
            softmax_lastdim(Tensor(np.zeros((2, 0))))


class TestConv2d:
    def test_one_by_one_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 3, 4, 4))
        k = np.eye(3).reshape(3, 3, 1, 1)
        out = conv2d(Tensor(x), Tensor(k))
        assert np.allclose(out.data, x)

    def test_all_ones_kernel_on_constant_image(self):
        c = 0.7
        x = np.full((1, 1, 5, 5), c)
        k = np.ones((1, 1, 3, 3))
        out = conv2d(Tensor(x), Tensor(k), stride=1, padding=0)
        assert np.allclose(out.data, 9 * c)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_matches_six_loop_reference(self, stride, padding):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(2, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        out = conv2d(Tensor(x), Tensor(k), stride=stride, padding=padding)
        ref = conv2d_reference(x, k, stride, padding)
        assert np.allclose(out.data, ref, atol=1e-10, rtol=0)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


class TestElementwise:
    def test_relu_values(self):
        out = relu(Tensor([-1.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 2.0])

    def test_gelu_is_odd_at_zero(self):
        assert gelu(Tensor([0.0])).data[0] == 0.0

    def test_nearest_resize_tiles_2x2_to_4x4(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = nearest_resize(m, (4, 4))
        expected = np.repeat(np.repeat(m.data, 2, axis=0), 2, axis=1)
        assert np.array_equal(out.data, expected)

    def test_nearest_resize_rejects_grad_tensors(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        with pytest.raises(UsageError):
            nearest_resize(m, (4, 4))

    def test_nearest_resize_downsample_picks_floor(self):
        m = Tensor(np.arange(16.0).reshape(4, 4))
        out = nearest_resize(m, (2, 2))
        assert np.array_equal(out.data, [[0.0, 2.0], [8.0, 10.0]])

    def test_up_and_downsample_roundtrip(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(1, 2, 3, 3)))
        up = upsample_nearest(x, 2)
        down = downsample_nearest(up, 2)
        assert np.array_equal(down.data, x.data)

    def test_reshape_roundtrip_is_identity(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(3, 4)))
        back = reshape(reshape(x, (2, 6)), (3, 4))
        assert np.array_equal(back.data, x.data)

    def test_transpose_inverse(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.normal(size=(2, 3, 4)))
        back = transpose(transpose(x, (1, 2, 0)), (2, 0, 1))
        assert np.array_equal(back.data, x.data)

    def test_concat_and_sum(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0])
        out = concat([a, b], axis=0)
        assert np.array_equal(out.data, [1.0, 2.0, 3.0])
        assert tensor_sum(out).item() == 6.0

    def test_mean_over_axis_tuple(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 4))
        out = mean(x, axis=(0, 2))
        assert np.allclose(out.data, x.data.mean(axis=(0, 2)))

    def test_one_hot_rejects_out_of_range(self):
        with pytest.raises(DataError):
            one_hot(np.array([0, 8]), 8)

    def test_log_clamp_floor(self):
        out = log_clamped(Tensor([0.0, 1.0]))
        assert np.isclose(out.data[0], np.log(1e-12))
        assert out.data[1] == 0.0


class TestNonFiniteGuard:
    def test_overflowing_forward_raises(self):
        x = Tensor([1e308])
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            x * 1e308


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.random.default_rng(0).normal(size=(2, 3)), requires_grad=True)
        tensor_sum(x).backward()
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic_grad(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        tensor_sum(x * x).backward()
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_shared_subgraph_accumulates_linearly(self):
        rng = np.random.default_rng(7)
        xv = rng.normal(size=(3,))
        w1 = rng.normal(size=(3,))
        w2 = rng.normal(size=(3,))

        x = Tensor(xv, requires_grad=True)
        loss = tensor_sum(x * Tensor(w1)) + tensor_sum(x * Tensor(w2))
        loss.backward()
        both = x.grad.copy()

        x = Tensor(xv, requires_grad=True)
        tensor_sum(x * Tensor(w1)).backward()
        g1 = x.grad.copy()
        x = Tensor(xv, requires_grad=True)
        tensor_sum(x * Tensor(w2)).backward()
        g2 = x.grad.copy()

        assert np.allclose(both, g1 + g2)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(UsageError):
            (x * x).backward()

    def test_backward_reentry_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = tensor_sum(x * x)
        loss.backward()
        with pytest.raises(UsageError):
            loss.backward()
