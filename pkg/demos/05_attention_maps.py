"""Render attention heatmaps for a chosen query token.

Reuses the checkpoint and corpus from demo 04 (runs it first if needed).
For a query token on the probe, the self head shows where the model looks
within the probe and the cross head shows which donor tokens it matches;
with the multi-scale projection each head yields one map per branch scale.

Run:  python3 demos/05_attention_maps.py
"""

import subprocess
import sys
from pathlib import Path

from mstaf.datagen import read_manifest
from mstaf.viz import render_attention_maps

out_root = Path(__file__).parent / "_out" / "train_demo"
if not (out_root / "run" / "model.mstaf").exists():
    print("checkpoint missing; running demo 04 first...")
    subprocess.run([sys.executable, str(Path(__file__).parent / "04_train_and_evaluate.py")], check=True)

record = read_manifest(out_root / "corpus" / "manifest.jsonl")[0]
probe = out_root / "corpus" / record["probe"]
donor = out_root / "corpus" / record["donor"]

viz_dir = Path(__file__).parent / "_out" / "attention_maps"
# query the center token of the stage-1 grid (16x16 for the toy preset)
written = render_attention_maps(
    out_root / "run" / "model.mstaf", probe, donor, stage=1, block=0, token_yx=(8, 8), out_dir=viz_dir
)
print("wrote:")
for path in written:
    print(" ", path)
print("\nnaming: attn_<image>_<head>[_branchK].png; the red cross marks the query token.")
