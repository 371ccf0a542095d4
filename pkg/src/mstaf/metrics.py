"""Localization metrics (IoU, MCC, NMM) and the pair detection rule.

Conventions, fixed and test-pinned: threshold ties binarize to 1; IoU of two
empty masks is 1; MCC with a zero factor is 0; NMM needs nonempty ground
truth (pairs with empty truth are excluded and flagged); detection precision
with zero predicted positives is reported as 0 with a degenerate flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import read_manifest
from .errors import DataError, DimensionError
from .imgio import load_mask

DETECT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError(f"negative confusion counts: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def gt_size(self) -> int:
        return self.tp + self.fn


def binarize(mask: np.ndarray, threshold: float = DETECT_THRESHOLD) -> np.ndarray:
    """Pixels >= threshold become 1 (ties go up)."""
    return (np.asarray(mask) >= threshold).astype(np.uint8)


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    if pred.shape != gt.shape:
        raise DimensionError(f"confusion: prediction shape {pred.shape} vs truth shape {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=p.size - tp - fp - fn)


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    c = confusion(pred, gt)
    union = c.tp + c.fp + c.fn
    return 1.0 if union == 0 else c.tp / union


def mcc(counts: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0.0 when any factor vanishes."""
    denom = (
        float(counts.tp + counts.fp)
        * float(counts.tp + counts.fn)
        * float(counts.tn + counts.fp)
        * float(counts.tn + counts.fn)
    )
    if denom == 0.0:
        return 0.0
    return (float(counts.tp) * counts.tn - float(counts.fp) * counts.fn) / math.sqrt(denom)


def nmm(counts: ConfusionCounts, gt_size: int | None = None) -> float:
    """(TP - FN - FP) / |GT|, clamped below at -1; undefined for empty truth."""
    size = counts.gt_size if gt_size is None else gt_size
    if size <= 0:
        raise DataError("nmm undefined for empty ground truth")
    return max(-1.0, (counts.tp - counts.fn - counts.fp) / size)


def detect_pair(mask_p: np.ndarray, mask_d: np.ndarray, threshold: float = DETECT_THRESHOLD) -> bool:
    """Pair is positive iff either binarized mask contains a 1-pixel."""
    return bool(binarize(mask_p, threshold).any() or binarize(mask_d, threshold).any())


@dataclass
class PairScore:
    pair_id: str
    label: str
    bin: str | None
    detected: bool
    iou_p: float | None = None
    iou_d: float | None = None
    mcc_p: float | None = None
    mcc_d: float | None = None
    nmm_p: float | None = None
    nmm_d: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.pair_id,
            "label": self.label,
            "bin": self.bin,
            "detected": self.detected,
            "iou_p": self.iou_p,
            "iou_d": self.iou_d,
            "mcc_p": self.mcc_p,
            "mcc_d": self.mcc_d,
            "nmm_p": self.nmm_p,
            "nmm_d": self.nmm_d,
            "flags": self.flags,
        }


@dataclass
class MetricReport:
    """Per-pair scores plus dataset aggregates.

    Localization aggregates average over both masks of the scored positive
    pairs; detection covers every pair.
    """

    pairs: list[PairScore]
    localization: dict
    detection: dict
    by_bin: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "localization": self.localization,
                "detection": self.detection,
                "by_bin": self.by_bin,
                "pairs": [p.to_dict() for p in self.pairs],
            },
            sort_keys=True,
            indent=2,
        )

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "scores.jsonl", "w") as fh:
            for p in self.pairs:
                fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
        summary = {"localization": self.localization, "detection": self.detection, "by_bin": self.by_bin}
        (out_dir / "report.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        (out_dir / "report.txt").write_text(self.to_table() + "\n")

    def to_table(self) -> str:
        loc, det = self.localization, self.detection
        lines = [
            f"{'':12s}{'IoU':>10s}{'MCC':>10s}{'NMM':>10s}{'pairs':>8s}",
        ]

        def row(name, stats):
            if stats.get("n", 0) == 0:
                return f"{name:<12s}{'-':>10s}{'-':>10s}{'-':>10s}{0:>8d}"
            return (
                f"{name:<12s}{stats['iou']:>10.4f}{stats['mcc']:>10.4f}{stats['nmm']:>10.4f}{stats['n']:>8d}"
            )

        lines.append(row("localization", loc))
        for name in ("difficult", "normal", "easy"):
            if name in self.by_bin:
                lines.append(row(f"  {name}", self.by_bin[name]))
        lines.append("")
        lines.append(
            f"detection   precision {det['precision']:.4f}  recall {det['recall']:.4f}  f1 {det['f1']:.4f}"
            f"  (tp {det['tp']} fp {det['fp']} fn {det['fn']} tn {det['tn']})"
        )
        if det.get("flags"):
            lines.append(f"flags: {', '.join(det['flags'])}")
        return "\n".join(lines)


def score_pair(record: dict, pred_p: np.ndarray, pred_d: np.ndarray, gt_p: np.ndarray, gt_d: np.ndarray) -> PairScore:
    score = PairScore(
        pair_id=record["id"],
        label=record["label"],
        bin=record.get("bin"),
        detected=detect_pair(pred_p, pred_d),
    )
    if record["label"] != "positive":
        return score
    bp, bd = binarize(pred_p), binarize(pred_d)
    cp, cd = confusion(bp, gt_p), confusion(bd, gt_d)
    score.iou_p, score.iou_d = iou(bp, gt_p), iou(bd, gt_d)
    score.mcc_p, score.mcc_d = mcc(cp), mcc(cd)
    for name, counts in (("nmm_p", cp), ("nmm_d", cd)):
        if counts.gt_size == 0:
            score.flags.append(f"{name}_undefined_empty_gt")
        else:
            setattr(score, name, nmm(counts))
    return score


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def aggregate(scored: list[PairScore]) -> MetricReport:
    positives = [s for s in scored if s.label == "positive" and not s.flags]
    flagged = [s for s in scored if s.label == "positive" and s.flags]

    def loc_stats(subset: list[PairScore]) -> dict:
        return {
            "iou": _mean([v for s in subset for v in (s.iou_p, s.iou_d)]),
            "mcc": _mean([v for s in subset for v in (s.mcc_p, s.mcc_d)]),
            "nmm": _mean([v for s in subset for v in (s.nmm_p, s.nmm_d)]),
            "n": len(subset),
        }

    localization = loc_stats(positives)
    if flagged:
        localization["excluded"] = [s.pair_id for s in flagged]

    by_bin = {}
    for name in ("difficult", "normal", "easy"):
        subset = [s for s in positives if s.bin == name]
        if subset:
            by_bin[name] = loc_stats(subset)

    tp = sum(1 for s in scored if s.label == "positive" and s.detected)
    fp = sum(1 for s in scored if s.label == "negative" and s.detected)
    fn = sum(1 for s in scored if s.label == "positive" and not s.detected)
    tn = sum(1 for s in scored if s.label == "negative" and not s.detected)
    flags = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("precision_undefined_no_predicted_positives")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("recall_undefined_no_positive_pairs")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    detection = {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
        "flags": flags,
    }
    return MetricReport(pairs=scored, localization=localization, detection=detection, by_bin=by_bin)


def score_dataset(predictions_dir, manifest_path, corpus_dir=None) -> MetricReport:
    """Score every manifest record against ``<id>_p.png``/``<id>_d.png`` predictions.

    Pairs are scored in manifest order; a missing prediction is a hard error
    naming the record.
    """
    predictions_dir = Path(predictions_dir)
    manifest_path = Path(manifest_path)
    corpus_dir = Path(corpus_dir) if corpus_dir is not None else manifest_path.parent
    records = sorted(read_manifest(manifest_path), key=lambda r: r["id"])

    scored = []
    for record in records:
        pred_p_path = predictions_dir / f"{record['id']}_p.png"
        pred_d_path = predictions_dir / f"{record['id']}_d.png"
        for p in (pred_p_path, pred_d_path):
            if not p.exists():
                raise DataError(f"missing prediction {p.name} for manifest record '{record['id']}'")
        pred_p = load_mask_values(pred_p_path)
        pred_d = load_mask_values(pred_d_path)
        gt_p = load_mask(corpus_dir / record["mask_probe"])
        gt_d = load_mask(corpus_dir / record["mask_donor"])
        scored.append(score_pair(record, pred_p, pred_d, gt_p, gt_d))
    return aggregate(scored)


def load_mask_values(path) -> np.ndarray:
    """Read a prediction mask as raw [0, 1] floats (no thresholding)."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float32) / 255.0
