"""Mask decoder shapes and BCE loss values."""

import math

import numpy as np
import pytest

from mstaf import tensor as T
from mstaf.decoder import DecoderParams, bce_loss, decode, init_decoder, pair_bce_loss, upsample_levels
from mstaf.embedding import TokenGrid
from mstaf.errors import ConfigurationError, DimensionError
from mstaf.gradcheck import max_rel_error, numerical_gradient


def _grid(rng, b, h, w, c, dtype=np.float32):
    return TokenGrid(T.Tensor(rng.normal(size=(b, h * w, c)).astype(dtype)), h, w)


def test_four_levels_reach_full_resolution():
    assert upsample_levels(16, 256) == 4
    rng = np.random.default_rng(0)
    params = init_decoder(8, (8, 8, 4, 4), rng)
    mask = decode(_grid(rng, 1, 16, 16, 8), params, (256, 256))
    assert mask.shape == (1, 1, 256, 256)


def test_outputs_strictly_inside_unit_interval():
    rng = np.random.default_rng(1)
    params = init_decoder(8, (8, 4), rng)
    mask = decode(_grid(rng, 2, 4, 4, 8), params, (16, 16)).numpy()
    assert np.all(mask > 0.0) and np.all(mask < 1.0)


def test_decode_deterministic_and_shared_across_images():
    rng = np.random.default_rng(2)
    params = init_decoder(6, (4, 4), rng)
    grid_p = _grid(rng, 1, 4, 4, 6)
    grid_d = _grid(rng, 1, 4, 4, 6)
    a = decode(grid_p, params, (16, 16)).numpy()
    b = decode(grid_p, params, (16, 16)).numpy()
    assert np.array_equal(a, b)
    # one parameter set serves both images
    c = decode(grid_d, params, (16, 16)).numpy()
    assert c.shape == a.shape and not np.array_equal(a, c)


def test_non_power_of_two_target_rejected():
    rng = np.random.default_rng(3)
    params = init_decoder(6, (4, 4), rng)
    with pytest.raises(ConfigurationError):
        decode(_grid(rng, 1, 4, 4, 6), params, (24, 24))
    with pytest.raises(ConfigurationError):
        decode(_grid(rng, 1, 4, 4, 6), params, (32, 32))  # needs 3 levels, params have 2


class TestBceLoss:
    def test_half_prediction_gives_ln2(self):
        m = T.Tensor(np.full((1, 1, 4, 4), 0.5, dtype=np.float32))
        g = (np.random.default_rng(4).uniform(size=(1, 1, 4, 4)) > 0.5).astype(np.float32)
        assert bce_loss(m, g).item() == pytest.approx(math.log(2.0), abs=1e-6)

    def test_perfect_prediction_is_clamp_bounded(self):
        g = (np.random.default_rng(5).uniform(size=(1, 1, 8, 8)) > 0.5).astype(np.float64)
        m = T.Tensor(g.copy(), dtype=np.float64)
        loss = bce_loss(m, g).item()
        assert 0.0 <= loss <= -math.log(1.0 - 1e-7) + 1e-12

    def test_hand_computed_case(self):
        m = T.Tensor(np.array([0.9, 0.2], dtype=np.float64).reshape(1, 1, 1, 2), dtype=np.float64)
        g = np.array([1.0, 0.0]).reshape(1, 1, 1, 2)
        expected = -(math.log(0.9) + math.log(0.8)) / 2.0  # = 0.164252033486018
        assert bce_loss(m, g).item() == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.164252, abs=1e-6)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(6)
        m = T.Tensor(rng.uniform(0.01, 0.99, size=(2, 1, 5, 5)).astype(np.float32))
        g = (rng.uniform(size=(2, 1, 5, 5)) > 0.5).astype(np.float32)
        assert bce_loss(m, g).item() >= 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            bce_loss(T.Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 3, 3)))

    def test_gradient_matches_formula_and_fd(self):
        rng = np.random.default_rng(7)
        m_data = rng.uniform(0.05, 0.95, size=(1, 1, 3, 4))
        g = (rng.uniform(size=(1, 1, 3, 4)) > 0.5).astype(np.float64)
        m = T.Tensor(m_data, requires_grad=True, dtype=np.float64)
        bce_loss(m, g).backward()
        hw = m_data.size
        analytic_formula = (m_data - g) / (m_data * (1.0 - m_data)) / hw
        np.testing.assert_allclose(m.grad, analytic_formula, rtol=1e-10)

        def probe(x):
            return bce_loss(T.Tensor(x, dtype=np.float64), g).item()

        numeric = numerical_gradient(probe, m_data.copy(), step=1e-6)
        assert max_rel_error(m.grad, numeric) <= 1e-3

    def test_pair_loss_averages_both_masks(self):
        g = np.ones((1, 1, 2, 2))
        mp = T.Tensor(np.full((1, 1, 2, 2), 0.9), dtype=np.float64)
        md = T.Tensor(np.full((1, 1, 2, 2), 0.5), dtype=np.float64)
        expected = (-math.log(0.9) - math.log(0.5)) / 2.0
        assert pair_bce_loss(mp, g, md, g).item() == pytest.approx(expected, abs=1e-9)
