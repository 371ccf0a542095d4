"""Overlap patch embedding: strided conv + layer norm over token channels.

The kernel is larger than the stride, so adjacent tokens share pixels;
the same embedding parameters serve both images of a pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .init import ones, truncated_normal, zeros
from .tensor import Tensor, conv_output_extent


@dataclass
class TokenGrid:
    """A batch of token sequences with their remembered 2-D layout.

    ``tokens`` is [B, N, C] with N == grid_h * grid_w; reshaping to
    [B, C, grid_h, grid_w] and back is lossless.
    """

    tokens: Tensor
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.tokens.ndim != 3:
            raise DimensionError(f"TokenGrid needs [B, N, C] tokens, got shape {self.tokens.shape}")
        if self.tokens.shape[1] != self.grid_h * self.grid_w:
            raise DimensionError(
                f"TokenGrid: {self.tokens.shape[1]} tokens do not form a {self.grid_h}x{self.grid_w} grid"
            )

    @property
    def batch(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    def to_map(self) -> Tensor:
        """Tokens as a [B, C, grid_h, grid_w] feature map."""
        return T.unflatten_grid(self.tokens, self.grid_h, self.grid_w)

    @classmethod
    def from_map(cls, fmap: Tensor) -> "TokenGrid":
        _, _, h, w = fmap.shape
        return cls(T.flatten_grid(fmap), h, w)


@dataclass(frozen=True)
class PatchEmbedConfig:
    kernel: int
    stride: int
    padding: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        if self.kernel <= self.stride:
            raise ConfigurationError(
                f"patch embedding needs kernel > stride for overlap, got kernel={self.kernel} stride={self.stride}"
            )
        if self.padding != self.kernel // 2:
            raise ConfigurationError(
                f"patch embedding padding must be kernel//2, got padding={self.padding} kernel={self.kernel}"
            )

    def output_extent(self, extent: int) -> int:
        return conv_output_extent(extent, self.kernel, self.stride, self.padding)


@dataclass
class PatchEmbedParams:
    conv_w: Tensor
    conv_b: Tensor
    gamma: Tensor
    beta: Tensor

    def named(self) -> dict[str, Tensor]:
        return {
            "conv.w": self.conv_w,
            "conv.b": self.conv_b,
            "norm.gamma": self.gamma,
            "norm.beta": self.beta,
        }


def init_patch_embed(cfg: PatchEmbedConfig, rng: np.random.Generator) -> PatchEmbedParams:
    return PatchEmbedParams(
        conv_w=truncated_normal(rng, (cfg.out_channels, cfg.in_channels, cfg.kernel, cfg.kernel)),
        conv_b=zeros((cfg.out_channels,)),
        gamma=ones((cfg.out_channels,)),
        beta=zeros((cfg.out_channels,)),
    )


def embed(x: Tensor | TokenGrid, cfg: PatchEmbedConfig, params: PatchEmbedParams) -> TokenGrid:
    """Embed an image (stage 1) or a token grid (later stages) into coarser tokens."""
    fmap = x.to_map() if isinstance(x, TokenGrid) else x
    if fmap.ndim != 4:
        raise DimensionError(f"embed: expected [B, C, H, W] input, got shape {fmap.shape}")
    if fmap.shape[1] != cfg.in_channels:
        raise DimensionError(f"embed: input has {fmap.shape[1]} channels, config expects {cfg.in_channels}")
    out_h = cfg.output_extent(fmap.shape[2])
    out_w = cfg.output_extent(fmap.shape[3])
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            f"embed: input {fmap.shape[2]}x{fmap.shape[3]} produces an empty {out_h}x{out_w} token grid"
        )
    fmap = T.conv2d(fmap, params.conv_w, params.conv_b, stride=cfg.stride, padding=cfg.padding)
    tokens = T.layer_norm(T.flatten_grid(fmap), params.gamma, params.beta)
    return TokenGrid(tokens, out_h, out_w)
