"""The target-aware attention block.

Each block runs two attention heads of width C/2 per image: one attends to
the image's own tokens (feature extraction), the other attends to the paired
image's tokens (correlation matching via the query/key affinity). Their
channel concat goes through a Mix-FFN (MLP, depthwise 3x3 conv for local
continuity and position, GELU, MLP) and is added back onto the block input.

One parameter set serves both images, so swapping the pair swaps the outputs
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .embedding import TokenGrid
from .errors import DimensionError, UsageError
from .init import ones, truncated_normal, zeros
from .multiscale import MultiScaleConfig, MultiScaleParams, init_multiscale, project_multiscale
from .tensor import Tensor

BLOCK_MODES = ("unified", "self_only", "cross_only")


@dataclass
class LinearQkvParams:
    """Plain per-token projections C -> C/2 (no bias)."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v}


@dataclass
class MixFfnParams:
    w1: Tensor  # [C, r*C]
    b1: Tensor
    dw_w: Tensor  # [r*C, 1, 3, 3] depthwise
    dw_b: Tensor
    w2: Tensor  # [r*C, C]
    b2: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "dw.w": self.dw_w, "dw.b": self.dw_b, "w2": self.w2, "b2": self.b2}


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}


@dataclass
class TaaParams:
    """Everything one block owns: projections, Mix-FFN, optional pre-norm."""

    qkv: LinearQkvParams | MultiScaleParams
    ffn: MixFfnParams
    norm: NormParams | None = None

    def named(self) -> dict[str, Tensor]:
        prefix = "msproj" if isinstance(self.qkv, MultiScaleParams) else "qkv"
        out = {f"{prefix}.{k}": v for k, v in self.qkv.named().items()}
        out.update({f"ffn.{k}": v for k, v in self.ffn.named().items()})
        if self.norm is not None:
            out.update({f"norm.{k}": v for k, v in self.norm.named().items()})
        return out


@dataclass
class AttentionCapture:
    """Optional sink for per-block attention matrices (and concat features).

    ``stage``/``block`` restrict recording to one block; leave None to record
    everywhere. Records hold detached numpy arrays.
    """

    stage: int | None = None
    block: int | None = None
    with_concat: bool = False
    records: list[dict] = field(default_factory=list)

    def wants(self, stage: int, block: int) -> bool:
        return (self.stage is None or self.stage == stage) and (self.block is None or self.block == block)

    def grab(self, **record) -> None:
        self.records.append(record)

    def find(self, **match) -> list[dict]:
        return [r for r in self.records if all(r.get(k) == v for k, v in match.items())]


def init_mix_ffn(channels: int, ratio: int, rng: np.random.Generator) -> MixFfnParams:
    hidden = channels * ratio
    return MixFfnParams(
        w1=truncated_normal(rng, (channels, hidden)),
        b1=zeros((hidden,)),
        dw_w=truncated_normal(rng, (hidden, 1, 3, 3)),
        dw_b=zeros((hidden,)),
        w2=truncated_normal(rng, (hidden, channels)),
        b2=zeros((channels,)),
    )


def init_taa_block(
    channels: int,
    ffn_ratio: int,
    rng: np.random.Generator,
    multiscale: MultiScaleConfig | None = None,
    pre_norm: bool = True,
) -> TaaParams:
    if channels % 2 != 0:
        raise DimensionError(f"block channel count must be even (two heads of C/2), got {channels}")
    half = channels // 2
    if multiscale is not None:
        qkv: LinearQkvParams | MultiScaleParams = init_multiscale(channels, multiscale, rng)
    else:
        qkv = LinearQkvParams(
            w_q=truncated_normal(rng, (channels, half)),
            w_k=truncated_normal(rng, (channels, half)),
            w_v=truncated_normal(rng, (channels, half)),
        )
    norm = NormParams(gamma=ones((channels,)), beta=zeros((channels,))) if pre_norm else None
    return TaaParams(qkv=qkv, ffn=init_mix_ffn(channels, ffn_ratio, rng), norm=norm)


def project_qkv(grid: TokenGrid, params: LinearQkvParams) -> tuple[Tensor, Tensor, Tensor]:
    """Three independent linear maps of every token (C -> C/2 each)."""
    if params.w_q.shape[0] != grid.channels:
        raise DimensionError(
            f"project_qkv: grid has {grid.channels} channels, params expect {params.w_q.shape[0]}"
        )
    return (
        T.matmul(grid.tokens, params.w_q),
        T.matmul(grid.tokens, params.w_k),
        T.matmul(grid.tokens, params.w_v),
    )


def _attend(q: Tensor, k: Tensor, v: Tensor, scale_dim: int) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(scale_dim)) v; returns (output, attention weights)."""
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(scale_dim))
    weights = T.softmax(scores, axis=2)
    return T.matmul(weights, v), weights


def head_self(q: Tensor, k: Tensor, v: Tensor, scale_dim: int) -> Tensor:
    """Attention over the image's own tokens. ``scale_dim`` goes under the sqrt."""
    out, _ = _attend(q, k, v, scale_dim)
    return out


def head_cross(q: Tensor, k: Tensor, v: Tensor, scale_dim: int) -> Tensor:
    """Attention of one image's queries over the paired image's keys/values."""
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"head_cross: head widths disagree, {q.shape} vs {k.shape}")
    out, _ = _attend(q, k, v, scale_dim)
    return out


def mix_ffn(tokens: Tensor, params: MixFfnParams, grid_h: int, grid_w: int) -> Tensor:
    """Expand MLP -> depthwise 3x3 conv on the grid -> GELU -> contract MLP."""
    if tokens.shape[1] != grid_h * grid_w:
        raise UsageError(
            f"mix_ffn: {tokens.shape[1]} tokens do not form the stated {grid_h}x{grid_w} grid"
        )
    hidden = T.linear(tokens, params.w1, params.b1)
    fmap = T.unflatten_grid(hidden, grid_h, grid_w)
    fmap = T.conv2d(fmap, params.dw_w, params.dw_b, stride=1, padding=1, groups=fmap.shape[1])
    hidden = T.gelu(T.flatten_grid(fmap))
    return T.linear(hidden, params.w2, params.b2)


def _project(grid: TokenGrid, params: TaaParams, ms_cfg: MultiScaleConfig | None):
    tokens = grid.tokens
    if params.norm is not None:
        tokens = T.layer_norm(tokens, params.norm.gamma, params.norm.beta)
    normed = TokenGrid(tokens, grid.grid_h, grid.grid_w)
    if isinstance(params.qkv, MultiScaleParams):
        if ms_cfg is None:
            raise UsageError("block has multiscale params but no MultiScaleConfig was given")
        return project_multiscale(normed, ms_cfg, params.qkv)
    q, k, v = project_qkv(normed, params.qkv)
    return q, k, v, [(grid.grid_h, grid.grid_w)]


def taa_block(
    f_p: TokenGrid,
    f_d: TokenGrid,
    params: TaaParams,
    ms_cfg: MultiScaleConfig | None = None,
    mode: str = "unified",
    scale_dim: int | None = None,
    capture: AttentionCapture | None = None,
    capture_tags: dict | None = None,
) -> tuple[TokenGrid, TokenGrid]:
    """One target-aware attention block applied to a probe/donor pair.

    ``mode`` rewires which keys/values feed the two heads: "unified" is one
    self head plus one cross head; "self_only"/"cross_only" feed both heads
    the same way (the separate-pipeline ablation).
    """
    if f_p.channels != f_d.channels:
        raise DimensionError(f"taa_block: channel counts differ, {f_p.channels} vs {f_d.channels}")
    if mode not in BLOCK_MODES:
        raise UsageError(f"taa_block: unknown mode {mode!r}, expected one of {BLOCK_MODES}")
    if scale_dim is None:
        scale_dim = f_p.channels

    projected = {"p": _project(f_p, params, ms_cfg), "d": _project(f_d, params, ms_cfg)}
    grids = {"p": f_p, "d": f_d}
    outputs = {}
    for name, other in (("p", "d"), ("d", "p")):
        q, k_own, v_own, grids_own = projected[name]
        _, k_other, v_other, grids_other = projected[other]
        if mode == "unified":
            h1, w1 = _attend(q, k_own, v_own, scale_dim)
            h2, w2 = _attend(q, k_other, v_other, scale_dim)
            head_kinds = (("self", w1, grids_own), ("cross", w2, grids_other))
        elif mode == "self_only":
            h1, w1 = _attend(q, k_own, v_own, scale_dim)
            h2, head_kinds = h1, (("self", w1, grids_own),)
        else:
            h1, w1 = _attend(q, k_other, v_other, scale_dim)
            h2, head_kinds = h1, (("cross", w1, grids_other),)

        grid = grids[name]
        cat = T.concat([h1, h2], axis=2)
        if capture is not None:
            for kind, weights, key_grids in head_kinds:
                capture.grab(
                    image=name,
                    head=kind,
                    weights=np.array(weights.numpy()),
                    query_grid=(grid.grid_h, grid.grid_w),
                    key_grids=list(key_grids),
                    **(capture_tags or {}),
                )
            if capture.with_concat:
                capture.grab(image=name, head="concat", features=np.array(cat.numpy()), **(capture_tags or {}))
        mixed = mix_ffn(cat, params.ffn, grid.grid_h, grid.grid_w)
        outputs[name] = TokenGrid(T.add(grid.tokens, mixed), grid.grid_h, grid.grid_w)

    return outputs["p"], outputs["d"]
