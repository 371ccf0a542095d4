"""Dual-image transformer for constrained image splicing detection and
localization, with its own numpy autodiff engine, synthetic pair generator,
and forensic metric suite."""

from .attention import AttentionCapture, head_cross, head_self, mix_ffn, project_qkv, taa_block
from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import (
    SourceItem,
    SplicePair,
    TransformRanges,
    TransformSpec,
    build_corpus,
    difficulty_bin,
    generate_pair,
    load_sources,
    make_synthetic_sources,
)
from .decoder import bce_loss, decode, pair_bce_loss
from .embedding import PatchEmbedConfig, TokenGrid, embed
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    DimensionError,
    MstafError,
    NumericError,
    PlacementError,
    UsageError,
)
from .evaluate import evaluate
from .metrics import MetricReport, binarize, detect_pair, iou, mcc, nmm, score_dataset
from .model import ModelConfig, ModelParams, forward, init_params, paper_config, toy_config
from .multiscale import BranchSpec, MultiScaleConfig, project_multiscale
from .optim import AdamState, adam_step
from .tensor import Tensor, no_grad, using_dtype
from .train import TrainConfig, train

__version__ = "0.1.0"
