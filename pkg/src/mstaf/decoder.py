"""Fully-convolutional mask decoder and the binary cross-entropy loss.

The decoder repeats (2x bilinear upsample, 3x3 conv, GELU) until the token
grid reaches the input resolution, then a 1x1 conv and a sigmoid produce a
per-pixel splice probability. One decoder is shared by probe and donor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .embedding import TokenGrid
from .errors import ConfigurationError, DimensionError
from .init import truncated_normal, zeros
from .tensor import Tensor

BCE_EPS = 1e-7


@dataclass
class DecoderParams:
    level_conv_w: list[Tensor]  # one 3x3 conv per 2x upsampling level
    level_conv_b: list[Tensor]
    head_w: Tensor  # 1x1 conv to a single channel
    head_b: Tensor

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.level_conv_w, self.level_conv_b)):
            out[f"level{i}.conv.w"] = w
            out[f"level{i}.conv.b"] = b
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out


def upsample_levels(grid_size: int, resolution: int) -> int:
    """Number of 2x levels between the final grid and the input resolution."""
    if resolution % grid_size != 0:
        raise ConfigurationError(f"resolution {resolution} is not a multiple of the {grid_size} token grid")
    ratio = resolution // grid_size
    levels = ratio.bit_length() - 1
    if 2**levels != ratio:
        raise ConfigurationError(f"resolution {resolution} is not a power-of-two multiple of the {grid_size} grid")
    return levels


def init_decoder(
    in_channels: int, channel_schedule: tuple[int, ...], rng: np.random.Generator
) -> DecoderParams:
    widths = (in_channels, *channel_schedule)
    return DecoderParams(
        level_conv_w=[truncated_normal(rng, (widths[i + 1], widths[i], 3, 3)) for i in range(len(channel_schedule))],
        level_conv_b=[zeros((c,)) for c in channel_schedule],
        head_w=truncated_normal(rng, (1, widths[-1], 1, 1)),
        head_b=zeros((1,)),
    )


def decode(grid: TokenGrid, params: DecoderParams, out_hw: tuple[int, int]) -> Tensor:
    """Final-stage tokens -> [B, 1, H, W] probability mask, values in (0, 1)."""
    out_h, out_w = out_hw
    levels_h = upsample_levels(grid.grid_h, out_h)
    levels_w = upsample_levels(grid.grid_w, out_w)
    if levels_h != levels_w:
        raise ConfigurationError(f"anisotropic upsampling {levels_h}x{levels_w} levels is not supported")
    if levels_h != len(params.level_conv_w):
        raise ConfigurationError(
            f"decoder has {len(params.level_conv_w)} conv levels but {levels_h} upsampling levels are needed"
        )
    x = grid.to_map()
    for w, b in zip(params.level_conv_w, params.level_conv_b):
        x = T.upsample2x_bilinear(x)
        x = T.gelu(T.conv2d(x, w, b, stride=1, padding=1))
    return T.sigmoid(T.conv2d(x, params.head_w, params.head_b))


def bce_loss(mask: Tensor, truth: Tensor | np.ndarray, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross entropy of one predicted mask against {0,1} truth.

    Predictions are clamped to [eps, 1-eps] before the logs.
    """
    truth_data = truth.data if isinstance(truth, Tensor) else np.asarray(truth, dtype=mask.dtype)
    if truth_data.shape != mask.shape:
        raise DimensionError(f"bce_loss: mask shape {mask.shape} vs truth shape {truth_data.shape}")
    g = Tensor(truth_data, dtype=mask.dtype)
    g_inv = Tensor(1.0 - truth_data, dtype=mask.dtype)
    m = T.clamp(mask, eps, 1.0 - eps)
    one_minus_m = T.add(T.mul(m, -1.0), 1.0)
    ll = T.add(T.mul(g, T.log(m)), T.mul(g_inv, T.log(one_minus_m)))
    return T.mul(T.tensor_mean(ll), -1.0)


def pair_bce_loss(mask_p: Tensor, truth_p, mask_d: Tensor, truth_d) -> Tensor:
    """Average of the probe and donor mask losses."""
    return T.mul(T.add(bce_loss(mask_p, truth_p), bce_loss(mask_d, truth_d)), 0.5)
