"""Multi-scale query/key/value projection.

Three parallel convolutions with growing receptive fields turn one token
grid into three token sets at different coarseness. Queries come from the
resolution-preserving first branch only; keys and values are projected from
all three branches and stacked along the token axis, so attention compares
patches across scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .embedding import TokenGrid
from .errors import ConfigurationError, DimensionError
from .init import truncated_normal, zeros
from .tensor import Tensor, conv_output_extent


@dataclass(frozen=True)
class BranchSpec:
    kernel: int
    stride: int
    padding: int

    def output_extent(self, extent: int) -> int:
        return conv_output_extent(extent, self.kernel, self.stride, self.padding)


DEFAULT_BRANCHES = (BranchSpec(3, 1, 1), BranchSpec(3, 2, 1), BranchSpec(5, 4, 2))


@dataclass(frozen=True)
class MultiScaleConfig:
    branches: tuple[BranchSpec, BranchSpec, BranchSpec] = DEFAULT_BRANCHES

    def __post_init__(self):
        if len(self.branches) != 3:
            raise ConfigurationError(f"multiscale projection needs exactly 3 branches, got {len(self.branches)}")
        first = self.branches[0]
        # attention output must keep one row per input token for the residual add
        if first.stride != 1 or 2 * first.padding != first.kernel - 1:
            raise ConfigurationError(
                f"multiscale branch 1 must preserve the token grid; kernel={first.kernel} "
                f"stride={first.stride} padding={first.padding} does not"
            )


@dataclass
class MultiScaleParams:
    branch_conv_w: list[Tensor]  # each [C/2, C, k, k]
    branch_conv_b: list[Tensor]
    w_q: Tensor  # [C/2, C/2], applied to branch-1 tokens only
    w_k: Tensor  # [C/2, C/2], applied to every branch's tokens
    w_v: Tensor

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.branch_conv_w, self.branch_conv_b), start=1):
            out[f"branch{i}.conv.w"] = w
            out[f"branch{i}.conv.b"] = b
        out["w_q"] = self.w_q
        out["w_k"] = self.w_k
        out["w_v"] = self.w_v
        return out


def init_multiscale(channels: int, cfg: MultiScaleConfig, rng: np.random.Generator) -> MultiScaleParams:
    half = channels // 2
    return MultiScaleParams(
        branch_conv_w=[truncated_normal(rng, (half, channels, b.kernel, b.kernel)) for b in cfg.branches],
        branch_conv_b=[zeros((half,)) for _ in cfg.branches],
        w_q=truncated_normal(rng, (half, half)),
        w_k=truncated_normal(rng, (half, half)),
        w_v=truncated_normal(rng, (half, half)),
    )


def project_multiscale(
    grid: TokenGrid, cfg: MultiScaleConfig, params: MultiScaleParams
) -> tuple[Tensor, Tensor, Tensor, list[tuple[int, int]]]:
    """Project tokens to (Q [B,N,C/2], K and V [B,N1+N2+N3,C/2], branch grids)."""
    if params.branch_conv_w[0].shape[1] != grid.channels:
        raise DimensionError(
            f"project_multiscale: grid has {grid.channels} channels, params expect {params.branch_conv_w[0].shape[1]}"
        )
    fmap = grid.to_map()
    branch_tokens: list[Tensor] = []
    key_grids: list[tuple[int, int]] = []
    for spec, w, b in zip(cfg.branches, params.branch_conv_w, params.branch_conv_b):
        oh, ow = spec.output_extent(grid.grid_h), spec.output_extent(grid.grid_w)
        if oh < 1 or ow < 1:
            raise ConfigurationError(
                f"project_multiscale: branch {spec} collapses a {grid.grid_h}x{grid.grid_w} grid to {oh}x{ow}"
            )
        feat = T.conv2d(fmap, w, b, stride=spec.stride, padding=spec.padding)
        branch_tokens.append(T.flatten_grid(feat))
        key_grids.append((oh, ow))

    q = T.matmul(branch_tokens[0], params.w_q)
    k = T.concat([T.matmul(t, params.w_k) for t in branch_tokens], axis=1)
    v = T.concat([T.matmul(t, params.w_v) for t in branch_tokens], axis=1)
    return q, k, v, key_grids
