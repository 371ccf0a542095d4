"""Target-aware attention block, checked against naive-loop oracles."""

import numpy as np
import pytest

from mstaf import tensor as T
from mstaf.attention import (
    AttentionCapture,
    LinearQkvParams,
    MixFfnParams,
    NormParams,
    TaaParams,
    head_cross,
    head_self,
    init_taa_block,
    mix_ffn,
    project_qkv,
    taa_block,
)
from mstaf.embedding import TokenGrid
from mstaf.errors import DimensionError, UsageError
from oracles import naive_attention, naive_mix_ffn, naive_taa_block


def _grid(arr, h, w, dtype=np.float64):
    return TokenGrid(T.Tensor(np.asarray(arr), dtype=dtype), h, w)


def _qkv_params(c, seed, dtype=np.float64):
    rng = np.random.default_rng(seed)
    half = c // 2
    make = lambda: T.Tensor(rng.normal(size=(c, half)), requires_grad=True, dtype=dtype)
    return LinearQkvParams(w_q=make(), w_k=make(), w_v=make())


class TestProjectQkv:
    def test_zero_weights_give_zero_queries(self):
        p = _qkv_params(4, seed=0)
        p.w_q.data[...] = 0.0
        q, k, v = project_qkv(_grid(np.random.default_rng(1).normal(size=(1, 4, 4)), 2, 2), p)
        assert np.all(q.numpy() == 0.0)
        assert not np.all(k.numpy() == 0.0)

    def test_identity_like_projection_copies_token(self):
        c = 4
        w = np.zeros((c, 2))
        w[0, 0] = w[1, 1] = 1.0
        p = LinearQkvParams(*(T.Tensor(w, dtype=np.float64) for _ in range(3)))
        token = np.array([[[1.5, -2.0, 3.0, 0.5]]])
        q, _, _ = project_qkv(_grid(token, 1, 1), p)
        np.testing.assert_allclose(q.numpy(), [[[1.5, -2.0]]])

    def test_two_token_case_matches_matmul_oracle(self):
        tokens = np.random.default_rng(2).normal(size=(1, 2, 4))
        p = _qkv_params(4, seed=3)
        q, k, v = project_qkv(_grid(tokens, 1, 2), p)
        for got, w in ((q, p.w_q), (k, p.w_k), (v, p.w_v)):
            np.testing.assert_allclose(got.numpy()[0], tokens[0] @ w.numpy(), rtol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            project_qkv(_grid(np.zeros((1, 2, 6)), 1, 2), _qkv_params(4, seed=0))


class TestHeads:
    def test_single_token_returns_value(self):
        rng = np.random.default_rng(4)
        q, k, v = (T.Tensor(rng.normal(size=(1, 1, 3)), dtype=np.float64) for _ in range(3))
        out = head_self(q, k, v, scale_dim=6)
        np.testing.assert_allclose(out.numpy(), v.numpy(), rtol=1e-12)

    def test_identical_tokens_give_value_row(self):
        rng = np.random.default_rng(5)
        row = rng.normal(size=3)
        q = T.Tensor(np.tile(row, (1, 4, 1)), dtype=np.float64)
        k = T.Tensor(np.tile(row, (1, 4, 1)), dtype=np.float64)
        vrow = rng.normal(size=3)
        v = T.Tensor(np.tile(vrow, (1, 4, 1)), dtype=np.float64)
        out = head_self(q, k, v, scale_dim=6)
        np.testing.assert_allclose(out.numpy(), np.tile(vrow, (1, 4, 1)), rtol=1e-12)

    def test_two_token_case_matches_naive_oracle(self):
        rng = np.random.default_rng(6)
        q, k, v = (rng.normal(size=(1, 2, 3)) for _ in range(3))
        out = head_self(T.Tensor(q, dtype=np.float64), T.Tensor(k, dtype=np.float64), T.Tensor(v, dtype=np.float64), scale_dim=6)
        ref = naive_attention(q[0].tolist(), k[0].tolist(), v[0].tolist(), 6)
        np.testing.assert_allclose(out.numpy()[0], ref, atol=1e-12)

    def test_cross_equals_self_on_identical_features(self):
        rng = np.random.default_rng(7)
        tokens = rng.normal(size=(1, 5, 4))
        p = _qkv_params(4, seed=8)
        q, k, v = project_qkv(_grid(tokens, 1, 5), p)
        own = head_self(q, k, v, scale_dim=4).numpy()
        cross = head_cross(q, k, v, scale_dim=4).numpy()
        assert np.array_equal(own, cross)

    def test_zero_values_give_zero_output(self):
        rng = np.random.default_rng(9)
        q = T.Tensor(rng.normal(size=(1, 3, 2)), dtype=np.float64)
        k = T.Tensor(rng.normal(size=(1, 4, 2)), dtype=np.float64)
        v = T.Tensor(np.zeros((1, 4, 2)), dtype=np.float64)
        assert np.all(head_cross(q, k, v, scale_dim=4).numpy() == 0.0)

    def test_asymmetric_two_by_two_matches_naive(self):
        rng = np.random.default_rng(10)
        qp = rng.normal(size=(1, 2, 2))
        kd = rng.normal(size=(1, 2, 2))
        vd = rng.normal(size=(1, 2, 2))
        out = head_cross(T.Tensor(qp, dtype=np.float64), T.Tensor(kd, dtype=np.float64), T.Tensor(vd, dtype=np.float64), scale_dim=4)
        ref = naive_attention(qp[0].tolist(), kd[0].tolist(), vd[0].tolist(), 4)
        np.testing.assert_allclose(out.numpy()[0], ref, atol=1e-12)


class TestMixFfn:
    def _params(self, c, ratio, seed, zero=False):
        rng = np.random.default_rng(seed)
        hidden = c * ratio
        def mk(shape):
            data = np.zeros(shape) if zero else rng.normal(size=shape) * 0.5
            return T.Tensor(data, dtype=np.float64)
        return MixFfnParams(
            w1=mk((c, hidden)), b1=mk((hidden,)) if not zero else T.Tensor(np.zeros(hidden), dtype=np.float64),
            dw_w=mk((hidden, 1, 3, 3)), dw_b=T.Tensor(np.zeros(hidden), dtype=np.float64),
            w2=mk((hidden, c)), b2=T.Tensor(np.zeros(c), dtype=np.float64),
        )

    def test_zero_input_zero_biases_gives_zero(self):
        p = self._params(2, 4, seed=11)
        p.b1.data[...] = 0.0
        out = mix_ffn(T.Tensor(np.zeros((1, 4, 2)), dtype=np.float64), p, 2, 2)
        np.testing.assert_allclose(out.numpy(), 0.0, atol=1e-15)

    def test_shape_contract(self):
        p = self._params(6, 2, seed=12)
        x = T.Tensor(np.random.default_rng(13).normal(size=(2, 12, 6)), dtype=np.float64)
        assert mix_ffn(x, p, 3, 4).shape == (2, 12, 6)

    def test_two_by_two_grid_matches_naive_oracle(self):
        c, ratio = 2, 4
        p = self._params(c, ratio, seed=14)
        tokens = np.random.default_rng(15).normal(size=(1, 4, c))
        out = mix_ffn(T.Tensor(tokens, dtype=np.float64), p, 2, 2).numpy()[0]
        ref = naive_mix_ffn(
            tokens[0].tolist(), 2, 2,
            p.w1.numpy().tolist(), p.b1.numpy().tolist(),
            p.dw_w.numpy()[:, 0].tolist(), p.dw_b.numpy().tolist(),
            p.w2.numpy().tolist(), p.b2.numpy().tolist(),
        )
        np.testing.assert_allclose(out, ref, atol=1e-9)

    def test_non_rectangular_token_count_rejected(self):
        p = self._params(2, 4, seed=16)
        with pytest.raises(UsageError):
            mix_ffn(T.Tensor(np.zeros((1, 5, 2)), dtype=np.float64), p, 2, 2)


def _random_block(c, seed, pre_norm=True, dtype=np.float64):
    with T.using_dtype(dtype):
        return init_taa_block(c, 4, np.random.default_rng(seed), multiscale=None, pre_norm=pre_norm)


class TestTaaBlock:
    def test_swap_symmetry_bit_exact(self):
        rng = np.random.default_rng(17)
        block = _random_block(8, seed=18)
        fp = _grid(rng.normal(size=(2, 6, 8)), 2, 3)
        fd = _grid(rng.normal(size=(2, 6, 8)), 2, 3)
        xp, xd = taa_block(fp, fd, block)
        yd, yp = taa_block(fd, fp, block)
        assert np.array_equal(xp.tokens.numpy(), yp.tokens.numpy())
        assert np.array_equal(xd.tokens.numpy(), yd.tokens.numpy())

    def test_zero_params_leave_input_unchanged(self):
        block = _random_block(4, seed=19)
        for tensor in block.named().values():
            tensor.data[...] = 0.0
        rng = np.random.default_rng(20)
        fp = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        fd = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        xp, xd = taa_block(fp, fd, block)
        np.testing.assert_allclose(xp.tokens.numpy(), fp.tokens.numpy(), atol=1e-15)
        np.testing.assert_allclose(xd.tokens.numpy(), fd.tokens.numpy(), atol=1e-15)

    def test_single_token_pair_matches_full_hand_trace(self):
        c = 2
        block = _random_block(c, seed=21)
        rng = np.random.default_rng(22)
        tp = rng.normal(size=(1, 1, c))
        td = rng.normal(size=(1, 1, c))
        xp, xd = taa_block(_grid(tp, 1, 1), _grid(td, 1, 1), block)

        qkv, ffn, norm = block.qkv, block.ffn, block.norm
        params = {
            "gamma": norm.gamma.numpy().tolist(), "beta": norm.beta.numpy().tolist(),
            "w_q": qkv.w_q.numpy().tolist(), "w_k": qkv.w_k.numpy().tolist(), "w_v": qkv.w_v.numpy().tolist(),
            "w1": ffn.w1.numpy().tolist(), "b1": ffn.b1.numpy().tolist(),
            "dw_w": ffn.dw_w.numpy()[:, 0].tolist(), "dw_b": ffn.dw_b.numpy().tolist(),
            "w2": ffn.w2.numpy().tolist(), "b2": ffn.b2.numpy().tolist(),
        }
        ref_p, ref_d = naive_taa_block(tp[0].tolist(), td[0].tolist(), 1, 1, params, scale_dim=c)
        np.testing.assert_allclose(xp.tokens.numpy()[0], ref_p, atol=1e-9)
        np.testing.assert_allclose(xd.tokens.numpy()[0], ref_d, atol=1e-9)

    def test_multi_token_matches_hand_trace(self):
        c = 4
        block = _random_block(c, seed=23)
        rng = np.random.default_rng(24)
        tp = rng.normal(size=(1, 4, c))
        td = rng.normal(size=(1, 4, c))
        xp, xd = taa_block(_grid(tp, 2, 2), _grid(td, 2, 2), block)
        qkv, ffn, norm = block.qkv, block.ffn, block.norm
        params = {
            "gamma": norm.gamma.numpy().tolist(), "beta": norm.beta.numpy().tolist(),
            "w_q": qkv.w_q.numpy().tolist(), "w_k": qkv.w_k.numpy().tolist(), "w_v": qkv.w_v.numpy().tolist(),
            "w1": ffn.w1.numpy().tolist(), "b1": ffn.b1.numpy().tolist(),
            "dw_w": ffn.dw_w.numpy()[:, 0].tolist(), "dw_b": ffn.dw_b.numpy().tolist(),
            "w2": ffn.w2.numpy().tolist(), "b2": ffn.b2.numpy().tolist(),
        }
        ref_p, ref_d = naive_taa_block(tp[0].tolist(), td[0].tolist(), 2, 2, params, scale_dim=c)
        np.testing.assert_allclose(xp.tokens.numpy()[0], ref_p, atol=1e-9)
        np.testing.assert_allclose(xd.tokens.numpy()[0], ref_d, atol=1e-9)

    def test_attention_rows_stochastic(self):
        rng = np.random.default_rng(25)
        block = _random_block(6, seed=26)
        capture = AttentionCapture()
        taa_block(_grid(rng.normal(size=(2, 6, 6)), 2, 3), _grid(rng.normal(size=(2, 6, 6)), 2, 3), block, capture=capture)
        assert len(capture.records) == 4  # self + cross for both images
        for rec in capture.records:
            w = rec["weights"]
            assert np.all(w >= 0)
            np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)

    def test_concat_channel_provenance(self):
        # first C/2 concat channels follow the own image, last C/2 the other image
        c = 8
        block = _random_block(c, seed=27)
        rng = np.random.default_rng(28)
        tp = rng.normal(size=(1, 4, c))
        td = rng.normal(size=(1, 4, c))
        td2 = td.copy()
        td2[0, 1] += 1.0

        def concat_for(p_arr, d_arr):
            cap = AttentionCapture(with_concat=True)
            taa_block(_grid(p_arr, 2, 2), _grid(d_arr, 2, 2), block, capture=cap)
            return cap.find(image="p", head="concat")[0]["features"]

        base = concat_for(tp, td)
        moved = concat_for(tp, td2)
        half = c // 2
        assert np.array_equal(base[..., :half], moved[..., :half])
        assert not np.array_equal(base[..., half:], moved[..., half:])

    def test_block_preserves_token_and_channel_counts(self):
        rng = np.random.default_rng(29)
        block = _random_block(4, seed=30)
        fp = _grid(rng.normal(size=(3, 12, 4)), 3, 4)
        fd = _grid(rng.normal(size=(3, 12, 4)), 3, 4)
        xp, xd = taa_block(fp, fd, block)
        assert xp.tokens.shape == (3, 12, 4)
        assert (xp.grid_h, xp.grid_w) == (3, 4)

    def test_channel_mismatch_between_images(self):
        block = _random_block(4, seed=31)
        with pytest.raises(DimensionError):
            taa_block(_grid(np.zeros((1, 4, 4)), 2, 2), _grid(np.zeros((1, 4, 6)), 2, 2), block)

    def test_self_only_mode_ignores_other_image(self):
        rng = np.random.default_rng(32)
        block = _random_block(4, seed=33)
        fp = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        fd1 = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        fd2 = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        a, _ = taa_block(fp, fd1, block, mode="self_only")
        b, _ = taa_block(fp, fd2, block, mode="self_only")
        assert np.array_equal(a.tokens.numpy(), b.tokens.numpy())

    def test_cross_only_mode_tracks_other_image(self):
        rng = np.random.default_rng(34)
        block = _random_block(4, seed=35)
        fp = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        fd1 = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        fd2 = _grid(rng.normal(size=(1, 4, 4)), 2, 2)
        a, _ = taa_block(fp, fd1, block, mode="cross_only")
        b, _ = taa_block(fp, fd2, block, mode="cross_only")
        assert not np.array_equal(a.tokens.numpy(), b.tokens.numpy())

    def test_unknown_mode_rejected(self):
        block = _random_block(4, seed=36)
        g = _grid(np.zeros((1, 4, 4)), 2, 2)
        with pytest.raises(UsageError):
            taa_block(g, g, block, mode="both")
