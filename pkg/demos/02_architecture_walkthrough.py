"""The dual-image pipeline, stage by stage.

Shows the token-grid chain, the two attention heads, the multi-scale key/value
stacking, swap symmetry, and the decoder back to full resolution.

Run:  python3 demos/02_architecture_walkthrough.py
"""

import numpy as np

from mstaf import tensor as T
from mstaf.attention import AttentionCapture
from mstaf.model import forward, init_params, paper_config, toy_config

rng = np.random.default_rng(1)

# ---------------------------------------------------------------------------
# 1. Shape chain. Three overlapping patch embeddings divide the input by 4,
#    then 2, then 2; the decoder climbs back up with 2x bilinear steps.
# ---------------------------------------------------------------------------
for name, cfg in (("toy", toy_config()), ("paper", paper_config())):
    grids = cfg.grid_sizes()
    tokens = [g * g for g in grids]
    print(f"{name:6s} preset: {cfg.resolution}x{cfg.resolution} input -> grids {grids} -> token counts {tokens}")

# ---------------------------------------------------------------------------
# 2. Run the toy model on a random pair and capture the attention internals.
# ---------------------------------------------------------------------------
cfg = toy_config()
params = init_params(cfg, seed=0)
probe = T.Tensor(rng.uniform(size=(1, 3, 64, 64)).astype(np.float32))
donor = T.Tensor(rng.uniform(size=(1, 3, 64, 64)).astype(np.float32))

capture = AttentionCapture()  # record every block
with T.no_grad():
    mask_p, mask_d = forward(probe, donor, params, cfg, capture=capture)
print("\noutput masks:", mask_p.shape, mask_d.shape, "values in", (float(mask_p.numpy().min()), float(mask_p.numpy().max())))

for rec in capture.records:
    if rec["image"] == "p":
        n_q = rec["weights"].shape[1]
        n_k = rec["weights"].shape[2]
        print(
            f"stage {rec['stage']} block {rec['block']} {rec['head']:5s} head: "
            f"{n_q} queries x {n_k} keys (key grids {rec['key_grids']})"
        )

# With the multi-scale projection, keys/values stack three branch token sets:
# on the stage-1 16x16 grid that is 256 + 64 + 16 = 336 keys per query.

# ---------------------------------------------------------------------------
# 3. Swap symmetry: one parameter set serves both images, so exchanging the
#    pair exchanges the outputs bit for bit.
# ---------------------------------------------------------------------------
with T.no_grad():
    swapped_d, swapped_p = forward(donor, probe, params, cfg)
print("\nswap symmetry:",
      np.array_equal(mask_p.numpy(), swapped_p.numpy()) and np.array_equal(mask_d.numpy(), swapped_d.numpy()))

# ---------------------------------------------------------------------------
# 4. Attention rows are probability distributions over key tokens.
# ---------------------------------------------------------------------------
row_sums = capture.records[0]["weights"].sum(axis=-1)
print("attention rows sum to 1:", bool(np.allclose(row_sums, 1.0, atol=1e-6)))
