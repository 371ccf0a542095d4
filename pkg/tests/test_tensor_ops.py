"""Forward semantics of the tensor kernels, pinned on hand-checkable cases."""

import math

import numpy as np
import pytest

from mstaf import tensor as T
from mstaf.errors import ConfigurationError, DimensionError, UsageError


def t(data, grad=False, dtype=np.float32):
    return T.Tensor(np.asarray(data), requires_grad=grad, dtype=dtype)


class TestMatmul:
    def test_identity(self, rng):
        x = rng.normal(size=(2, 2)).astype(np.float32)
        out = T.matmul(t(np.eye(2)), t(x))
        np.testing.assert_allclose(out.numpy(), x, rtol=1e-6)

    def test_hand_case(self):
        out = T.matmul(t([[1.0, 2.0], [3.0, 4.0]]), t([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.numpy(), [[3.0], [7.0]])

    def test_batched_matches_loop(self, rng):
        a = rng.normal(size=(3, 4, 5)).astype(np.float32)
        b = rng.normal(size=(3, 5, 2)).astype(np.float32)
        out = T.matmul(t(a), t(b)).numpy()
        for i in range(3):
            np.testing.assert_allclose(out[i], a[i] @ b[i], rtol=1e-5)

    def test_shared_rhs(self, rng):
        a = rng.normal(size=(3, 4, 5)).astype(np.float32)
        w = rng.normal(size=(5, 2)).astype(np.float32)
        out = T.matmul(t(a), t(w)).numpy()
        np.testing.assert_allclose(out[1], a[1] @ w, rtol=1e-5)

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 3))))


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 1, 4, 4)).astype(np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        out = T.conv2d(t(x), t(w))
        np.testing.assert_allclose(out.numpy(), x, rtol=1e-6)

    def test_ones_kernel_sums(self):
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = T.conv2d(t(x), t(w))
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == pytest.approx(9.0)

    def test_matches_naive_loops(self, rng):
        x = rng.normal(size=(2, 3, 6, 5)).astype(np.float64)
        w = rng.normal(size=(4, 3, 3, 3)).astype(np.float64)
        b = rng.normal(size=4).astype(np.float64)
        stride, pad = 2, 1
        out = T.conv2d(t(x, dtype=np.float64), t(w, dtype=np.float64), t(b, dtype=np.float64), stride=stride, padding=pad).numpy()

        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        oh = (6 + 2 * pad - 3) // stride + 1
        ow = (5 + 2 * pad - 3) // stride + 1
        expected = np.zeros((2, 4, oh, ow))
        for bi in range(2):
            for co in range(4):
                for i in range(oh):
                    for j in range(ow):
                        patch = xp[bi, :, i * stride : i * stride + 3, j * stride : j * stride + 3]
                        expected[bi, co, i, j] = np.sum(patch * w[co]) + b[co]
        np.testing.assert_allclose(out, expected, rtol=1e-10)

    def test_depthwise_matches_naive(self, rng):
        c = 3
        x = rng.normal(size=(1, c, 5, 5)).astype(np.float64)
        w = rng.normal(size=(c, 1, 3, 3)).astype(np.float64)
        out = T.conv2d(t(x, dtype=np.float64), t(w, dtype=np.float64), stride=1, padding=1, groups=c).numpy()
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for ch in range(c):
            for i in range(5):
                for j in range(5):
                    ref = np.sum(xp[0, ch, i : i + 3, j : j + 3] * w[ch, 0])
                    assert out[0, ch, i, j] == pytest.approx(ref, rel=1e-10)

    def test_zero_output_extent_rejected(self):
        with pytest.raises(ConfigurationError):
            T.conv2d(t(np.zeros((1, 1, 2, 2))), t(np.zeros((1, 1, 5, 5))))


class TestLayerNorm:
    def test_constant_token_is_zero(self):
        x = t([[5.0, 5.0, 5.0, 5.0]])
        out = T.layer_norm(x, t(np.ones(4)), t(np.zeros(4)))
        np.testing.assert_allclose(out.numpy(), np.zeros((1, 4)), atol=1e-6)

    def test_unit_statistics(self, rng):
        x = t(rng.normal(size=(7, 16)).astype(np.float32))
        out = T.layer_norm(x, t(np.ones(16)), t(np.zeros(16))).numpy()
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(t([0.0, 0.0]), axis=0).numpy()
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_large_logit_stable(self):
        out = T.softmax(t([1000.0, 0.0]), axis=0).numpy()
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-30)

    def test_rows_sum_to_one(self, rng):
        out = T.softmax(t(rng.normal(size=(4, 9)).astype(np.float32)), axis=1).numpy()
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


class TestPointwise:
    def test_gelu_center_and_asymptote(self):
        assert T.gelu(t([0.0])).numpy()[0] == 0.0
        assert T.gelu(t([10.0])).numpy()[0] == pytest.approx(10.0, abs=1e-4)

    def test_sigmoid_center(self):
        assert T.sigmoid(t([0.0])).numpy()[0] == pytest.approx(0.5)

    def test_clamp(self):
        out = T.clamp(t([-2.0, 0.3, 9.0]), 0.0, 1.0).numpy()
        np.testing.assert_allclose(out, [0.0, 0.3, 1.0])

    def test_add_bias_broadcast(self, rng):
        x = rng.normal(size=(2, 3, 4)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        np.testing.assert_allclose(T.add(t(x), t(b)).numpy(), x + b, rtol=1e-6)

    def test_add_backward_distributes_unchanged(self):
        a = t([1.0, 2.0], grad=True)
        b = t([3.0, 4.0], grad=True)
        T.tensor_sum(T.add(a, b)).backward()
        np.testing.assert_array_equal(a.grad, [1.0, 1.0])
        np.testing.assert_array_equal(b.grad, [1.0, 1.0])

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(t(np.zeros((2, 3))), t(np.zeros((3, 2))))


class TestShapeOps:
    def test_concat_shape(self):
        out = T.concat([t(np.zeros((2, 3))), t(np.zeros((2, 5)))], axis=1)
        assert out.shape == (2, 8)

    def test_concat_rejects_mismatch(self):
        with pytest.raises(DimensionError):
            T.concat([t(np.zeros((2, 3))), t(np.zeros((3, 3)))], axis=1)

    def test_flatten_grid_round_trip(self, rng):
        x = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
        tokens = T.flatten_grid(t(x))
        assert tokens.shape == (2, 20, 3)
        back = T.unflatten_grid(tokens, 4, 5)
        np.testing.assert_array_equal(back.numpy(), x)

    def test_transpose_reshape(self, rng):
        x = rng.normal(size=(2, 3, 4)).astype(np.float32)
        out = T.transpose(t(x), (2, 0, 1))
        assert out.shape == (4, 2, 3)
        assert T.reshape(t(x), (6, 4)).shape == (6, 4)


class TestUpsample:
    def test_constant_preserved(self):
        x = np.full((1, 1, 3, 4), 3.0, dtype=np.float32)
        out = T.upsample2x_bilinear(t(x)).numpy()
        assert out.shape == (1, 1, 6, 8)
        np.testing.assert_allclose(out, 3.0, rtol=1e-6)

    def test_single_pixel_copies(self):
        out = T.upsample2x_bilinear(t(np.full((1, 1, 1, 1), 7.0))).numpy()
        np.testing.assert_allclose(out, np.full((1, 1, 2, 2), 7.0))


class TestBackward:
    def test_sum_of_squares(self):
        x = t([1.0, 2.0, 3.0], grad=True)
        T.tensor_sum(T.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0], rtol=1e-6)

    def test_fanout_accumulates(self):
        x = t([5.0], grad=True)
        T.tensor_sum(T.add(x, x)).backward()
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_non_scalar_loss_rejected(self):
        x = t([1.0, 2.0], grad=True)
        with pytest.raises(UsageError):
            x.backward()

    def test_no_grad_suppresses_graph(self):
        x = t([1.0], grad=True)
        with T.no_grad():
            y = T.mul(x, x)
        assert not y.requires_grad

    def test_deterministic_forward(self, rng):
        x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
        w = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        a = T.conv2d(t(x), t(w), stride=1, padding=1).numpy()
        b = T.conv2d(t(x), t(w), stride=1, padding=1).numpy()
        assert np.array_equal(a, b)

    def test_all_values_finite_after_ops(self, rng):
        x = t(rng.normal(size=(3, 5)).astype(np.float32), grad=True)
        y = T.softmax(T.gelu(x), axis=1)
        loss = T.tensor_mean(T.log(T.clamp(y, 1e-7, 1.0)))
        loss.backward()
        assert np.all(np.isfinite(loss.numpy()))
        assert np.all(np.isfinite(x.grad))


class TestDtypeControl:
    def test_using_dtype(self):
        with T.using_dtype(np.float64):
            assert T.Tensor([1.0]).dtype == np.float64
        assert T.Tensor([1.0]).dtype == np.float32

    def test_rejects_int_dtype(self):
        with pytest.raises(UsageError):
            T.set_default_dtype(np.int32)
