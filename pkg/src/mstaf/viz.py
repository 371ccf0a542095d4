"""Attention-map rendering for a chosen query token.

For one (stage, block) the capture hook yields both heads' attention rows;
each row is folded back onto its key grid (one map per multi-scale branch),
upsampled to the input resolution, normalized by the row maximum, and saved
as a grayscale heatmap with the query location marked in red.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import AttentionCapture
from .checkpoint import load_checkpoint
from .errors import UsageError
from .imgio import load_image, resize_image, save_image
from .model import forward
from .tensor import Tensor


def _prepare_image(path, resolution: int) -> np.ndarray:
    image = load_image(path)
    if image.shape[1:] != (resolution, resolution):
        image = resize_image(image, resolution, resolution)
    return image.astype(np.float32)


def _mark_query(heat: np.ndarray, qy: int, qx: int, arm: int = 3) -> np.ndarray:
    """Grayscale [H, W] -> RGB [H, W, 3] with a red cross at the query pixel."""
    rgb = np.stack([heat, heat, heat], axis=-1)
    h, w = heat.shape
    ys = slice(max(qy - arm, 0), min(qy + arm + 1, h))
    xs = slice(max(qx - arm, 0), min(qx + arm + 1, w))
    rgb[ys, qx, :] = (1.0, 0.0, 0.0)
    rgb[qy, xs, :] = (1.0, 0.0, 0.0)
    return rgb


def render_attention_maps(
    checkpoint_path,
    probe_path,
    donor_path,
    stage: int,
    block: int,
    token_yx: tuple[int, int],
    out_dir,
) -> list[Path]:
    """Write per-head (and per-branch) heatmap PNGs; returns the paths."""
    params, cfg = load_checkpoint(checkpoint_path)
    if not 1 <= stage <= 3:
        raise UsageError(f"stage {stage} out of range; valid stages are 1..3")
    if not 0 <= block < cfg.depths[stage - 1]:
        raise UsageError(f"block {block} out of range; stage {stage} has blocks 0..{cfg.depths[stage - 1] - 1}")
    grid = cfg.grid_sizes()[stage - 1]
    qy, qx = token_yx
    if not (0 <= qy < grid and 0 <= qx < grid):
        raise UsageError(f"token ({qy}, {qx}) outside the stage-{stage} grid; valid coords are 0..{grid - 1}")

    i_p = Tensor(_prepare_image(probe_path, cfg.resolution)[None])
    i_d = Tensor(_prepare_image(donor_path, cfg.resolution)[None])
    capture = AttentionCapture(stage=stage, block=block)
    with T.no_grad():
        forward(i_p, i_d, params, cfg, capture=capture)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = cfg.resolution
    # query token center in pixel coordinates
    py = int(round((qy + 0.5) * res / grid - 0.5))
    px = int(round((qx + 0.5) * res / grid - 0.5))

    written = []
    for record in capture.records:
        if record["head"] not in ("self", "cross"):
            continue
        weights = record["weights"][0]  # [N_q, N_k]
        gh, gw = record["query_grid"]
        row = weights[qy * gw + qx]
        peak = float(row.max()) or 1.0
        offset = 0
        for branch, (kh, kw) in enumerate(record["key_grids"], start=1):
            segment = row[offset : offset + kh * kw].reshape(kh, kw)
            offset += kh * kw
            heat = resize_image(segment / peak, res, res)
            suffix = f"_branch{branch}" if len(record["key_grids"]) > 1 else ""
            path = out_dir / f"attn_{record['image']}_{record['head']}{suffix}.png"
            save_image(path, _mark_query(np.clip(heat, 0.0, 1.0), py, px).transpose(2, 0, 1))
            written.append(path)
    return written
