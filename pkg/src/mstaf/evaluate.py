"""Run a checkpoint over a corpus, write predicted masks, score them."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint
from .datagen import load_pair, read_manifest
from .errors import DataError
from .imgio import save_image
from .metrics import MetricReport, score_dataset
from .model import ModelConfig, ModelParams, forward

_WORKER: dict = {}


def predict_records(
    params: ModelParams,
    cfg: ModelConfig,
    corpus_dir,
    records: list[dict],
    out_dir,
    batch_size: int = 8,
) -> None:
    """Forward a list of manifest records and write <id>_p/_d.png masks."""
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        pairs = [load_pair(corpus_dir, r) for r in chunk]
        for pair in pairs:
            if pair.i_p.shape[1:] != (cfg.resolution, cfg.resolution):
                raise DataError(
                    f"checkpoint expects {cfg.resolution}x{cfg.resolution} inputs but corpus pair "
                    f"'{pair.meta.get('id')}' is {pair.i_p.shape[1]}x{pair.i_p.shape[2]}"
                )
        i_p = T.Tensor(np.stack([p.i_p for p in pairs]).astype(cfg.np_dtype))
        i_d = T.Tensor(np.stack([p.i_d for p in pairs]).astype(cfg.np_dtype))
        with T.no_grad():
            m_p, m_d = forward(i_p, i_d, params, cfg)
        for rec, mp, md in zip(chunk, m_p.numpy(), m_d.numpy()):
            save_image(out_dir / f"{rec['id']}_p.png", mp[0])
            save_image(out_dir / f"{rec['id']}_d.png", md[0])


def _init_worker(checkpoint_path: str) -> None:
    _WORKER["params"], _WORKER["cfg"] = load_checkpoint(checkpoint_path)


def _worker_predict(task) -> int:
    corpus_dir, records, out_dir, batch_size = task
    predict_records(_WORKER["params"], _WORKER["cfg"], corpus_dir, records, out_dir, batch_size)
    return len(records)


def evaluate(
    checkpoint_path,
    corpus_dir,
    out_dir,
    batch_size: int = 8,
    workers: int = 1,
) -> MetricReport:
    """Predict every corpus pair and produce a MetricReport (written to out_dir)."""
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    manifest = corpus_dir / "manifest.jsonl"
    records = sorted(read_manifest(manifest), key=lambda r: r["id"])
    preds_dir = out_dir / "predictions"

    if workers <= 1:
        params, cfg = load_checkpoint(checkpoint_path)
        predict_records(params, cfg, corpus_dir, records, preds_dir, batch_size)
    else:
        chunks = [records[i::workers] for i in range(workers)]
        tasks = [(str(corpus_dir), chunk, str(preds_dir), batch_size) for chunk in chunks if chunk]
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(str(checkpoint_path),)) as pool:
            list(pool.map(_worker_predict, tasks))

    report = score_dataset(preds_dir, manifest, corpus_dir)
    report.write(out_dir)
    return report
