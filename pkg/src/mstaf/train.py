"""Seeded minibatch Adam training of the pair-mask BCE objective."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .datagen import load_pair, read_manifest
from .decoder import pair_bce_loss
from .errors import DataError, NumericError
from .model import ModelConfig, ModelParams, forward, init_params
from .optim import AdamState, adam_step, collect_grads, grad_norm, zero_grads

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 0  # extra checkpoints every N steps; 0 = final only
    log_every: int = 1  # thin out the loss log when > 1
    stop_loss: float | None = None  # early stop once the loss falls below


@dataclass
class TrainResult:
    checkpoint_path: Path
    losses: list[float]
    steps_run: int
    params: ModelParams = field(repr=False, default=None)


def load_corpus_arrays(corpus_dir, model_cfg: ModelConfig) -> list[dict]:
    """All corpus pairs as numpy arrays, validated against the model resolution."""
    corpus_dir = Path(corpus_dir)
    records = read_manifest(corpus_dir / "manifest.jsonl")
    pairs = []
    for record in records:
        pair = load_pair(corpus_dir, record)
        if pair.i_p.shape[1:] != (model_cfg.resolution, model_cfg.resolution):
            raise DataError(
                f"pair '{record['id']}' is {pair.i_p.shape[1]}x{pair.i_p.shape[2]} but the model "
                f"expects {model_cfg.resolution}x{model_cfg.resolution}"
            )
        pairs.append(
            {
                "id": record["id"],
                "label": record["label"],
                "bin": record.get("bin"),
                "i_p": pair.i_p,
                "i_d": pair.i_d,
                "m_p": pair.m_p[None],  # [1, H, W]
                "m_d": pair.m_d[None],
            }
        )
    if not pairs:
        raise DataError(f"corpus {corpus_dir} is empty")
    return pairs


def _batches(n_items: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Seeded shuffled minibatch index stream, reshuffling each epoch."""
    produced = 0
    while produced < steps:
        order = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) == 0:
                continue
            yield chunk
            produced += 1
            if produced >= steps:
                return


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    corpus_dir,
    out_dir,
    params: ModelParams | None = None,
) -> TrainResult:
    """Train on a generated corpus; writes train_log.jsonl and model.mstaf.

    Fully seeded: parameter init uses train_cfg.seed and so does batch
    shuffling, so identical configs give identical loss curves.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = load_corpus_arrays(corpus_dir, model_cfg)

    if params is None:
        params = init_params(model_cfg, seed=train_cfg.seed)
    named = params.named()
    state = AdamState.for_params(named)
    rng = np.random.default_rng(train_cfg.seed)

    losses: list[float] = []
    log_path = out_dir / "train_log.jsonl"
    dtype = model_cfg.np_dtype
    with open(log_path, "w") as log_fh:
        for step, batch_idx in enumerate(_batches(len(pairs), train_cfg.batch_size, train_cfg.steps, rng)):
            i_p = T.Tensor(np.stack([pairs[i]["i_p"] for i in batch_idx]).astype(dtype))
            i_d = T.Tensor(np.stack([pairs[i]["i_d"] for i in batch_idx]).astype(dtype))
            g_p = np.stack([pairs[i]["m_p"] for i in batch_idx]).astype(dtype)
            g_d = np.stack([pairs[i]["m_d"] for i in batch_idx]).astype(dtype)

            zero_grads(named)
            m_p, m_d = forward(i_p, i_d, params, model_cfg)
            loss = pair_bce_loss(m_p, g_p, m_d, g_d)
            loss_value = loss.item()
            loss.backward()
            grads = collect_grads(named)
            gnorm = grad_norm(grads)

            if not np.isfinite(loss_value) or not np.isfinite(gnorm):
                diagnostic = {"step": step, "lr": train_cfg.lr, "grad_norm": gnorm, "loss": loss_value}
                (out_dir / "diagnostic.json").write_text(json.dumps(diagnostic, sort_keys=True, indent=2))
                raise NumericError(f"non-finite loss at step {step} (loss={loss_value}, grad_norm={gnorm})")

            adam_step(named, grads, state, lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2)
            losses.append(loss_value)
            if step % train_cfg.log_every == 0 or step == train_cfg.steps - 1:
                log_fh.write(json.dumps({"step": step, "loss": loss_value, "grad_norm": gnorm}) + "\n")
                log_fh.flush()
            if train_cfg.checkpoint_every and (step + 1) % train_cfg.checkpoint_every == 0:
                save_checkpoint(params, model_cfg, out_dir / f"ckpt_step{step + 1:06d}.mstaf")
            if train_cfg.stop_loss is not None and loss_value <= train_cfg.stop_loss:
                log.info("early stop at step %d: loss %.4f <= %.4f", step, loss_value, train_cfg.stop_loss)
                break

    final_path = out_dir / "model.mstaf"
    save_checkpoint(params, model_cfg, final_path)
    return TrainResult(checkpoint_path=final_path, losses=losses, steps_run=len(losses), params=params)
