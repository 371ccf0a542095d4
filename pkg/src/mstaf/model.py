"""Whole-network assembly: three embed+attention stages and the shared decoder.

The probe and donor go through the same parameters at every step; the only
pair interaction is inside the attention blocks. All parameters live in a
named map (stage{s}.embed.*, stage{s}.block{b}.*, decoder.*) so the
optimizer and the checkpoint format see one flat dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .attention import AttentionCapture, TaaParams, init_taa_block, taa_block
from .decoder import DecoderParams, decode, init_decoder, upsample_levels
from .embedding import PatchEmbedConfig, PatchEmbedParams, TokenGrid, embed, init_patch_embed
from .errors import ConfigurationError, DimensionError
from .multiscale import DEFAULT_BRANCHES, BranchSpec, MultiScaleConfig
from .tensor import Tensor

TOTAL_DOWNSAMPLING = 16  # stage strides 4, 2, 2


@dataclass(frozen=True)
class ModelConfig:
    resolution: int = 64
    depths: tuple[int, ...] = (1, 1, 1)
    widths: tuple[int, ...] = (16, 32, 64)
    multiscale: bool = True
    block_mode: str = "unified"  # "unified" | "separate"
    softmax_scale: str = "c"  # "c" | "c_half"
    pre_norm: bool = True
    ffn_ratio: int = 4
    decoder_channels: tuple[int, ...] = (128, 64, 32, 16)
    ms_branches: tuple[BranchSpec, ...] = DEFAULT_BRANCHES
    norm_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    norm_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    dtype: str = "float32"

    def __post_init__(self):
        if len(self.depths) != 3 or len(self.widths) != 3:
            raise ConfigurationError(f"need exactly 3 stage depths/widths, got {self.depths}/{self.widths}")
        if any(d < 1 for d in self.depths):
            raise ConfigurationError(f"stage depths must be positive, got {self.depths}")
        if any(w % 2 for w in self.widths):
            raise ConfigurationError(f"stage widths must be even (two heads of C/2), got {self.widths}")
        if self.resolution % TOTAL_DOWNSAMPLING != 0:
            raise ConfigurationError(
                f"resolution {self.resolution} must be divisible by the total downsampling {TOTAL_DOWNSAMPLING}"
            )
        if self.block_mode not in ("unified", "separate"):
            raise ConfigurationError(f"block_mode must be 'unified' or 'separate', got {self.block_mode!r}")
        if self.softmax_scale not in ("c", "c_half"):
            raise ConfigurationError(f"softmax_scale must be 'c' or 'c_half', got {self.softmax_scale!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        levels = upsample_levels(self.resolution // TOTAL_DOWNSAMPLING, self.resolution)
        if len(self.decoder_channels) != levels:
            raise ConfigurationError(
                f"decoder needs {levels} channel entries (one per 2x level), got {self.decoder_channels}"
            )
        MultiScaleConfig(self.ms_branches)  # validates branch invariants

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def embed_configs(self) -> list[PatchEmbedConfig]:
        first = PatchEmbedConfig(kernel=7, stride=4, padding=3, in_channels=3, out_channels=self.widths[0])
        later = [
            PatchEmbedConfig(kernel=3, stride=2, padding=1, in_channels=self.widths[i - 1], out_channels=self.widths[i])
            for i in (1, 2)
        ]
        return [first, *later]

    def grid_sizes(self) -> list[int]:
        return [self.resolution // 4, self.resolution // 8, self.resolution // 16]

    def multiscale_config(self) -> MultiScaleConfig | None:
        return MultiScaleConfig(self.ms_branches) if self.multiscale else None

    def block_modes(self) -> list[list[str]]:
        """Per-stage, per-block head wiring realizing the pipeline variant."""
        if self.block_mode == "unified":
            return [["unified"] * d for d in self.depths]
        modes = [["self_only"] * d for d in self.depths]
        modes[-1][-1] = "cross_only"
        return modes

    def scale_dim(self, channels: int) -> int:
        return channels if self.softmax_scale == "c" else channels // 2

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "depths": list(self.depths),
            "widths": list(self.widths),
            "multiscale": self.multiscale,
            "block_mode": self.block_mode,
            "softmax_scale": self.softmax_scale,
            "pre_norm": self.pre_norm,
            "ffn_ratio": self.ffn_ratio,
            "decoder_channels": list(self.decoder_channels),
            "ms_branches": [[b.kernel, b.stride, b.padding] for b in self.ms_branches],
            "norm_mean": list(self.norm_mean),
            "norm_std": list(self.norm_std),
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            resolution=int(d["resolution"]),
            depths=tuple(d["depths"]),
            widths=tuple(d["widths"]),
            multiscale=bool(d["multiscale"]),
            block_mode=d["block_mode"],
            softmax_scale=d["softmax_scale"],
            pre_norm=bool(d["pre_norm"]),
            ffn_ratio=int(d["ffn_ratio"]),
            decoder_channels=tuple(d["decoder_channels"]),
            ms_branches=tuple(BranchSpec(*b) for b in d["ms_branches"]),
            norm_mean=tuple(d["norm_mean"]),
            norm_std=tuple(d["norm_std"]),
            dtype=d["dtype"],
        )


def toy_config(**overrides) -> ModelConfig:
    """Desk-scale preset: 64x64 input, one block per stage, narrow widths."""
    return replace(ModelConfig(), **overrides)


def paper_config(**overrides) -> ModelConfig:
    """Full-scale preset: 256x256 input, stage depths 3/4/6, widths from 64."""
    return replace(
        ModelConfig(resolution=256, depths=(3, 4, 6), widths=(64, 128, 256)),
        **overrides,
    )


@dataclass
class StageParams:
    embed: PatchEmbedParams
    blocks: list[TaaParams]


@dataclass
class ModelParams:
    stages: list[StageParams]
    decoder: DecoderParams

    def named(self) -> dict[str, Tensor]:
        """Flat name -> tensor map with a stable order; names are unique."""
        out: dict[str, Tensor] = {}
        for s, stage in enumerate(self.stages, start=1):
            for key, tensor in stage.embed.named().items():
                out[f"stage{s}.embed.{key}"] = tensor
            for b, block in enumerate(stage.blocks):
                for key, tensor in block.named().items():
                    out[f"stage{s}.block{b}.{key}"] = tensor
        for key, tensor in self.decoder.named().items():
            out[f"decoder.{key}"] = tensor
        if len(out) != sum(1 for _ in self._iter_all()):
            raise ConfigurationError("parameter names are not unique")
        return out

    def _iter_all(self):
        for stage in self.stages:
            yield from stage.embed.named().values()
            for block in stage.blocks:
                yield from block.named().values()
        yield from self.decoder.named().values()

    def n_parameters(self) -> int:
        return sum(t.size for t in self.named().values())


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic init: truncated normal (std 0.02) weights, unit norms, zero biases."""
    rng = np.random.default_rng(seed)
    ms_cfg = cfg.multiscale_config()
    with T.using_dtype(cfg.np_dtype):
        stages = []
        for width, depth, embed_cfg in zip(cfg.widths, cfg.depths, cfg.embed_configs()):
            blocks = [
                init_taa_block(width, cfg.ffn_ratio, rng, multiscale=ms_cfg, pre_norm=cfg.pre_norm)
                for _ in range(depth)
            ]
            stages.append(StageParams(embed=init_patch_embed(embed_cfg, rng), blocks=blocks))
        decoder = init_decoder(cfg.widths[-1], cfg.decoder_channels, rng)
    return ModelParams(stages=stages, decoder=decoder)


def _normalize(image: Tensor, cfg: ModelConfig) -> Tensor:
    mean = np.asarray(cfg.norm_mean, dtype=cfg.np_dtype).reshape(1, 3, 1, 1)
    std = np.asarray(cfg.norm_std, dtype=cfg.np_dtype).reshape(1, 3, 1, 1)
    return Tensor((image.data.astype(cfg.np_dtype) - mean) / std)


def forward(
    i_p: Tensor,
    i_d: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    capture: AttentionCapture | None = None,
) -> tuple[Tensor, Tensor]:
    """Masks (M_p, M_d) in (0,1) for a probe/donor batch in [0,1], shape [B,3,H,W]."""
    expected = (3, cfg.resolution, cfg.resolution)
    for name, img in (("probe", i_p), ("donor", i_d)):
        if img.ndim != 4 or img.shape[1:] != expected:
            raise DimensionError(f"{name} batch shape {img.shape} does not match configured {expected}")
    if i_p.shape[0] != i_d.shape[0]:
        raise DimensionError(f"probe and donor batch sizes differ: {i_p.shape[0]} vs {i_d.shape[0]}")

    f_p: Tensor | TokenGrid = _normalize(i_p, cfg)
    f_d: Tensor | TokenGrid = _normalize(i_d, cfg)
    ms_cfg = cfg.multiscale_config()
    modes = cfg.block_modes()
    for s, stage in enumerate(params.stages):
        embed_cfg = cfg.embed_configs()[s]
        f_p = embed(f_p, embed_cfg, stage.embed)
        f_d = embed(f_d, embed_cfg, stage.embed)
        for b, block in enumerate(stage.blocks):
            block_capture = capture if capture is not None and capture.wants(s + 1, b) else None
            f_p, f_d = taa_block(
                f_p,
                f_d,
                block,
                ms_cfg=ms_cfg,
                mode=modes[s][b],
                scale_dim=cfg.scale_dim(f_p.channels),
                capture=block_capture,
                capture_tags={"stage": s + 1, "block": b},
            )
    out_hw = (cfg.resolution, cfg.resolution)
    return decode(f_p, params.decoder, out_hw), decode(f_d, params.decoder, out_hw)
