"""Overfit the toy model on four pairs, then score it with the forensic metrics.

This is the desk-scale sanity experiment: a model that cannot drive the
training loss toward zero on four fixed pairs has a bug somewhere. Takes
about half a minute on CPU.

Run:  python3 demos/04_train_and_evaluate.py
"""

from pathlib import Path

from mstaf.datagen import TransformRanges, build_corpus, make_synthetic_sources
from mstaf.evaluate import evaluate
from mstaf.model import toy_config
from mstaf.train import TrainConfig, train

out_root = Path(__file__).parent / "_out" / "train_demo"

# ---------------------------------------------------------------------------
# 1. Four-pair corpus at 64x64.
# ---------------------------------------------------------------------------
sources = make_synthetic_sources(6, 64, seed=11)
build_corpus(sources, 4, TransformRanges(), seed=5, out_dir=out_root / "corpus")

# ---------------------------------------------------------------------------
# 2. Train until the pair BCE drops below 0.025 (or 500 steps).
# ---------------------------------------------------------------------------
model_cfg = toy_config()
train_cfg = TrainConfig(steps=500, batch_size=4, lr=1e-3, seed=0, stop_loss=0.025, log_every=10)
result = train(model_cfg, train_cfg, out_root / "corpus", out_root / "run")
print(f"trained {result.steps_run} steps; loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}")

# ---------------------------------------------------------------------------
# 3. Evaluate on the training pairs: localization (IoU/MCC/NMM averaged over
#    both masks) and the pair-level detection rule.
# ---------------------------------------------------------------------------
report = evaluate(result.checkpoint_path, out_root / "corpus", out_root / "eval")
print()
print(report.to_table())
print()
print("report files in", out_root / "eval")
