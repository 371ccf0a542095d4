"""Synthetic splice-pair generation.

A donor object (given by an annotation mask) is warped by scale, rotation,
elastic deformation, and shift (composed in that order), pasted into a probe
background with an optional luminance gain, and both ground-truth masks are
emitted. Pairs are binned by spliced-area fraction, and a corpus builder
writes images plus a line-delimited JSON manifest, fully determined by its
seed (per-pair RNG streams are derived from (seed, index)).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, PlacementError
from .imgio import bilinear_sample, load_image, load_mask, nearest_sample, resize_image, save_image

log = logging.getLogger(__name__)

MIN_OBJECT_AREA = 16
MIN_SPLICE_RATIO = 0.01  # pairs below 1% spliced area are rejected outright

BIN_DIFFICULT = "difficult"
BIN_NORMAL = "normal"
BIN_EASY = "easy"
BINS = (BIN_DIFFICULT, BIN_NORMAL, BIN_EASY)

_BIN_EDGES = {BIN_DIFFICULT: (0.01, 0.10), BIN_NORMAL: (0.10, 0.30), BIN_EASY: (0.30, 1.0 + 1e-9)}


@dataclass
class SourceItem:
    """An annotated source: RGB image in [0,1] and a {0,1} object mask."""

    image: np.ndarray  # [3, H, W]
    mask: np.ndarray  # [H, W]
    item_id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DataError(f"source '{self.item_id}': image must be [3, H, W], got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise DataError(
                f"source '{self.item_id}': mask {self.mask.shape} does not match image {self.image.shape[1:]}"
            )
        if self.mask.sum() < 1:
            raise DataError(f"source '{self.item_id}': empty object mask")


@dataclass(frozen=True)
class TransformSpec:
    """A fully resolved object transform (deterministic given its seed)."""

    shift: tuple[float, float] = (0.0, 0.0)  # (dy, dx) pixels
    rotation_deg: float = 0.0
    scale: float = 1.0
    luminance: float = 1.0
    deform_magnitude: float = 0.0  # elastic control-point displacement, pixels
    deform_grid: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise DataError(f"transform scale must be positive, got {self.scale}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shift"] = list(self.shift)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(
            shift=tuple(d["shift"]),
            rotation_deg=float(d["rotation_deg"]),
            scale=float(d["scale"]),
            luminance=float(d["luminance"]),
            deform_magnitude=float(d["deform_magnitude"]),
            deform_grid=int(d["deform_grid"]),
            seed=int(d["seed"]),
        )


@dataclass
class SplicePair:
    """A probe/donor pair with ground-truth masks and generation metadata."""

    i_p: np.ndarray  # [3, H, W]
    i_d: np.ndarray
    m_p: np.ndarray  # [H, W] in {0, 1}
    m_d: np.ndarray
    label: str  # "positive" | "negative"
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for name, mask in (("m_p", self.m_p), ("m_d", self.m_d)):
            values = np.unique(mask)
            if not np.all(np.isin(values, (0.0, 1.0))):
                raise DataError(f"{name} is not binary (values {values[:5]})")
        if self.m_p.shape != self.i_p.shape[1:] or self.m_d.shape != self.i_d.shape[1:]:
            raise DataError("mask dimensions do not match images")
        if self.label == "negative" and (self.m_p.any() or self.m_d.any()):
            raise DataError("negative pair has nonzero masks")
        if self.label == "positive" and (not self.m_p.any() or not self.m_d.any()):
            raise DataError("positive pair has an empty mask")

    @property
    def splice_ratio(self) -> float:
        return float(self.m_p.sum()) / self.m_p.size


def _deform_field(h: int, w: int, spec: TransformSpec) -> tuple[np.ndarray, np.ndarray]:
    """Smooth per-pixel displacement from a coarse random control grid."""
    if spec.deform_magnitude == 0.0:
        zero = np.zeros((h, w))
        return zero, zero
    rng = np.random.default_rng(spec.seed)
    n = max(spec.deform_grid, 2)
    ctrl = rng.uniform(-spec.deform_magnitude, spec.deform_magnitude, size=(2, n, n))
    ys = np.linspace(0, n - 1, h)
    xs = np.linspace(0, n - 1, w)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample(ctrl[0], gy, gx), bilinear_sample(ctrl[1], gy, gx)


def _affine(spec: TransformSpec) -> np.ndarray:
    """Forward (row, col) linear map: rotation(theta) . scale."""
    theta = np.deg2rad(spec.rotation_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    return rot * spec.scale


def _object_bbox_corners(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return np.array(
        [[ys.min(), xs.min()], [ys.min(), xs.max()], [ys.max(), xs.min()], [ys.max(), xs.max()]],
        dtype=np.float64,
    )


def transformed_bbox(mask: np.ndarray, spec: TransformSpec) -> tuple[float, float, float, float]:
    """(min_y, max_y, min_x, max_x) of the object after the full transform,
    padded by the deformation magnitude."""
    ys, xs = np.nonzero(mask)
    center = np.array([ys.mean(), xs.mean()])
    corners = _object_bbox_corners(mask)
    moved = (corners - center) @ _affine(spec).T + center + np.asarray(spec.shift)
    pad = spec.deform_magnitude + 1.0
    return (
        float(moved[:, 0].min() - pad),
        float(moved[:, 0].max() + pad),
        float(moved[:, 1].min() - pad),
        float(moved[:, 1].max() + pad),
    )


def generate_pair(donor: SourceItem, probe_bg: np.ndarray, spec: TransformSpec) -> SplicePair:
    """Warp the donor object into the probe background; emit both masks.

    Raises PlacementError (retryable) when the transformed object does not
    fit fully inside the probe frame.
    """
    if donor.mask.sum() < MIN_OBJECT_AREA:
        raise DataError(f"source '{donor.item_id}': object area {int(donor.mask.sum())} < {MIN_OBJECT_AREA} px")
    h, w = probe_bg.shape[1:]

    min_y, max_y, min_x, max_x = transformed_bbox(donor.mask, spec)
    if min_y < 0 or min_x < 0 or max_y > h - 1 or max_x > w - 1:
        raise PlacementError(
            f"object bbox [{min_y:.1f},{max_y:.1f}]x[{min_x:.1f},{max_x:.1f}] leaves the {h}x{w} frame"
        )

    ys, xs = np.nonzero(donor.mask)
    center = np.array([ys.mean(), xs.mean()])
    inv = np.linalg.inv(_affine(spec))
    dy, dx = spec.shift

    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    uy, ux = gy - dy, gx - dx
    fy, fx = _deform_field(h, w, spec)
    uy = uy + fy
    ux = ux + fx
    py = inv[0, 0] * (uy - center[0]) + inv[0, 1] * (ux - center[1]) + center[0]
    px = inv[1, 0] * (uy - center[0]) + inv[1, 1] * (ux - center[1]) + center[1]

    warped_mask = (nearest_sample(donor.mask, py, px) >= 0.5).astype(np.float32)
    if not warped_mask.any():
        raise PlacementError("transformed object vanished from the frame")
    warped_img = bilinear_sample(donor.image, py, px)

    probe = probe_bg.astype(np.float32).copy()
    paste = warped_mask == 1.0
    probe[:, paste] = np.clip(spec.luminance * warped_img[:, paste], 0.0, 1.0)

    pair = SplicePair(
        i_p=probe,
        i_d=donor.image.astype(np.float32).copy(),
        m_p=warped_mask,
        m_d=donor.mask.astype(np.float32).copy(),
        label="positive",
        meta={"transform": spec.to_dict(), "sources": [donor.item_id]},
    )
    pair.validate()
    return pair


def negative_pair(image_a: np.ndarray, image_b: np.ndarray, sources: list[str]) -> SplicePair:
    """Two unrelated images; both masks all-zero."""
    pair = SplicePair(
        i_p=image_a.astype(np.float32).copy(),
        i_d=image_b.astype(np.float32).copy(),
        m_p=np.zeros(image_a.shape[1:], dtype=np.float32),
        m_d=np.zeros(image_b.shape[1:], dtype=np.float32),
        label="negative",
        meta={"sources": sources},
    )
    pair.validate()
    return pair


def bin_for_ratio(ratio: float) -> str | None:
    """Difficulty bin for a spliced-area fraction; None when below the 1% floor."""
    if ratio < MIN_SPLICE_RATIO:
        return None
    for name, (lo, hi) in _BIN_EDGES.items():
        if lo <= ratio < hi:
            return name
    return BIN_EASY


def difficulty_bin(pair: SplicePair) -> str:
    if pair.label != "positive":
        raise DataError("difficulty_bin is defined for positive pairs only")
    binned = bin_for_ratio(pair.splice_ratio)
    if binned is None:
        raise DataError(f"pair rejected: spliced area ratio {pair.splice_ratio:.4f} < {MIN_SPLICE_RATIO}")
    return binned


# -- corpus building ----------------------------------------------------------


@dataclass(frozen=True)
class TransformRanges:
    """Sampling ranges for build_corpus (shift is sampled over valid placements)."""

    rotation_deg: tuple[float, float] = (-30.0, 30.0)
    scale: tuple[float, float] = (0.5, 2.0)
    luminance: tuple[float, float] = (0.8, 1.2)
    deform_magnitude: tuple[float, float] = (0.0, 3.0)
    deform_grid: int = 4

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformRanges":
        return cls(
            rotation_deg=tuple(d["rotation_deg"]),
            scale=tuple(d["scale"]),
            luminance=tuple(d["luminance"]),
            deform_magnitude=tuple(d["deform_magnitude"]),
            deform_grid=int(d["deform_grid"]),
        )


def _reachable_ratio(area: float, frame_px: float, ranges: TransformRanges, target_bin: str) -> tuple[float, float] | None:
    lo_bin, hi_bin = _BIN_EDGES[target_bin]
    lo = max(lo_bin, ranges.scale[0] ** 2 * area / frame_px)
    hi = min(hi_bin, ranges.scale[1] ** 2 * area / frame_px)
    if lo >= hi:
        return None
    return lo, hi


def _sample_positive(
    sources: list[SourceItem],
    rng: np.random.Generator,
    ranges: TransformRanges,
    target_bin: str | None,
    max_source_tries: int = 20,
    max_placement_tries: int = 50,
) -> SplicePair:
    h = w = None
    for _ in range(max_source_tries):
        donor_idx = int(rng.integers(len(sources)))
        probe_idx = int(rng.integers(len(sources) - 1))
        if probe_idx >= donor_idx:
            probe_idx += 1
        donor = sources[donor_idx]
        probe_bg = sources[probe_idx].image
        h, w = probe_bg.shape[1:]
        area = float(donor.mask.sum())

        for _ in range(max_placement_tries):
            if target_bin is not None:
                reachable = _reachable_ratio(area, h * w, ranges, target_bin)
                if reachable is None:
                    break  # this donor cannot land in the requested bin
                ratio = rng.uniform(*reachable)
                scale = float(np.sqrt(ratio * h * w / area))
            else:
                scale = float(rng.uniform(*ranges.scale))
            spec = TransformSpec(
                shift=(0.0, 0.0),
                rotation_deg=float(rng.uniform(*ranges.rotation_deg)),
                scale=scale,
                luminance=float(rng.uniform(*ranges.luminance)),
                deform_magnitude=float(rng.uniform(*ranges.deform_magnitude)),
                deform_grid=ranges.deform_grid,
                seed=int(rng.integers(2**31 - 1)),
            )
            min_y, max_y, min_x, max_x = transformed_bbox(donor.mask, spec)
            ty_lo, ty_hi = -min_y, (h - 1) - max_y
            tx_lo, tx_hi = -min_x, (w - 1) - max_x
            if ty_lo > ty_hi or tx_lo > tx_hi:
                continue  # no valid placement at this size
            spec = TransformSpec(
                shift=(float(rng.uniform(ty_lo, ty_hi)), float(rng.uniform(tx_lo, tx_hi))),
                rotation_deg=spec.rotation_deg,
                scale=spec.scale,
                luminance=spec.luminance,
                deform_magnitude=spec.deform_magnitude,
                deform_grid=spec.deform_grid,
                seed=spec.seed,
            )
            try:
                pair = generate_pair(donor, probe_bg, spec)
            except PlacementError:
                continue
            got_bin = bin_for_ratio(pair.splice_ratio)
            if got_bin is None or (target_bin is not None and got_bin != target_bin):
                continue
            pair.meta["sources"] = [donor.item_id, sources[probe_idx].item_id]
            return pair
        log.warning("source '%s' skipped: no valid %s placement found", donor.item_id, target_bin or "any-bin")
    raise DataError(f"could not generate a {target_bin or 'positive'} pair after {max_source_tries} source draws")


def build_corpus(
    sources: list[SourceItem],
    n_pairs: int,
    ranges: TransformRanges,
    seed: int,
    out_dir,
    negative_fraction: float = 0.0,
    balance_bins: bool = True,
) -> Path:
    """Generate a corpus on disk; returns the manifest path.

    Deterministic in (sources, n_pairs, ranges, seed): per-pair RNG streams
    come from (seed, pair index), so results are order-independent.
    """
    if len(sources) < 2:
        raise DataError(f"need at least 2 source items, got {len(sources)}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    n_negative = int(round(n_pairs * negative_fraction))
    n_positive = n_pairs - n_negative
    records = []
    for index in range(n_pairs):
        rng = np.random.default_rng([seed, index])
        pair_id = f"pair_{index:05d}"
        if index < n_positive:
            target_bin = BINS[index % 3] if balance_bins else None
            pair = _sample_positive(sources, rng, ranges, target_bin)
        else:
            a_idx = int(rng.integers(len(sources)))
            b_idx = int(rng.integers(len(sources) - 1))
            if b_idx >= a_idx:
                b_idx += 1
            pair = negative_pair(
                sources[a_idx].image, sources[b_idx].image, [sources[a_idx].item_id, sources[b_idx].item_id]
            )

        paths = {
            "probe": f"images/{pair_id}_probe.png",
            "donor": f"images/{pair_id}_donor.png",
            "mask_probe": f"images/{pair_id}_mask_probe.png",
            "mask_donor": f"images/{pair_id}_mask_donor.png",
        }
        save_image(out_dir / paths["probe"], pair.i_p)
        save_image(out_dir / paths["donor"], pair.i_d)
        save_image(out_dir / paths["mask_probe"], pair.m_p)
        save_image(out_dir / paths["mask_donor"], pair.m_d)
        record = {
            "id": pair_id,
            "label": pair.label,
            "bin": difficulty_bin(pair) if pair.label == "positive" else None,
            "ratio": pair.splice_ratio if pair.label == "positive" else 0.0,
            **paths,
            "transform": pair.meta.get("transform"),
            "sources": pair.meta.get("sources", []),
        }
        records.append(record)

    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: bad manifest record ({exc})") from exc
    return records


def load_pair(corpus_dir, record: dict) -> SplicePair:
    """Materialize one manifest record and re-validate its invariants."""
    corpus_dir = Path(corpus_dir)
    pair = SplicePair(
        i_p=load_image(corpus_dir / record["probe"]),
        i_d=load_image(corpus_dir / record["donor"]),
        m_p=load_mask(corpus_dir / record["mask_probe"]),
        m_d=load_mask(corpus_dir / record["mask_donor"]),
        label=record["label"],
        meta={"transform": record.get("transform"), "sources": record.get("sources", []), "id": record["id"]},
    )
    pair.validate()
    return pair


# -- source corpora -----------------------------------------------------------


def rasterize_polygon(vertices: list[tuple[float, float]], h: int, w: int) -> np.ndarray:
    """Even-odd fill of an (x, y) vertex polygon on an h x w pixel grid."""
    if len(vertices) < 3:
        raise DataError(f"polygon needs >= 3 vertices, got {len(vertices)}")
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    inside = np.zeros((h, w), dtype=bool)
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > gy) != (y2 > gy)
        x_at = x1 + (gy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (gx < x_at)
    return inside.astype(np.float32)


def load_sources(directory, resolution: int | None = None) -> list[SourceItem]:
    """Read a source directory: images plus ``<stem>_mask.png`` files and/or an
    ``annotations.txt`` polygon file (lines: ``<image> x1,y1 x2,y2 ...``)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"source directory not found: {directory}")

    polygons: dict[str, list[tuple[float, float]]] = {}
    ann = directory / "annotations.txt"
    if ann.exists():
        for line_no, line in enumerate(ann.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 4:
                raise DataError(f"{ann}:{line_no}: need an image name and >= 3 vertices")
            try:
                vertices = [tuple(float(v) for v in p.split(",")) for p in parts[1:]]
            except ValueError as exc:
                raise DataError(f"{ann}:{line_no}: bad vertex ({exc})") from exc
            polygons[parts[0]] = [(x, y) for x, y in vertices]

    items = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg") or path.stem.endswith("_mask"):
            continue
        image = load_image(path)
        if path.name in polygons:
            mask = rasterize_polygon(polygons[path.name], image.shape[1], image.shape[2])
        else:
            mask_path = path.with_name(f"{path.stem}_mask.png")
            if not mask_path.exists():
                raise DataError(f"no mask or polygon annotation for source image {path.name}")
            mask = load_mask(mask_path)
        if resolution is not None and image.shape[1:] != (resolution, resolution):
            image = resize_image(image, resolution, resolution)
            mask = (resize_image(mask, resolution, resolution, mode="nearest") >= 0.5).astype(np.float32)
        items.append(SourceItem(image=image, mask=mask, item_id=path.stem))
    if not items:
        raise DataError(f"no usable source images in {directory}")
    return items


def make_synthetic_sources(n_items: int, size: int, seed: int) -> list[SourceItem]:
    """Self-contained toy sources: smooth noise backgrounds with one textured
    elliptical object each; object sizes span all difficulty bins."""
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n_items):
        coarse = rng.uniform(0.1, 0.9, size=(3, 5, 5))
        image = np.stack([resize_image(coarse[c], size, size) for c in range(3)])

        # spliced-area fractions from ~2% up to ~25% of the frame
        frac = rng.uniform(0.02, 0.25)
        radius = size * np.sqrt(frac / np.pi)
        ry = radius * rng.uniform(0.7, 1.3)
        rx = frac * size * size / np.pi / ry
        cy = rng.uniform(ry + 2, size - ry - 3)
        cx = rng.uniform(rx + 2, size - rx - 3)
        gy, gx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        mask = ((((gy - cy) / ry) ** 2 + ((gx - cx) / rx) ** 2) <= 1.0).astype(np.float32)

        tint = rng.uniform(0.0, 1.0, size=(3, 1))
        texture = rng.uniform(-0.15, 0.15, size=(3, size, size))
        obj = np.clip(tint[:, :, None] * 0.7 + 0.3 * image + texture, 0.0, 1.0)
        image = np.where(mask[None] == 1.0, obj, image).astype(np.float32)
        items.append(SourceItem(image=image, mask=mask, item_id=f"synthetic_{i:03d}"))
    return items


def write_sources_dir(items: list[SourceItem], directory) -> None:
    """Materialize SourceItems as PNG image + mask files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for item in items:
        save_image(directory / f"{item.item_id}.png", item.image)
        save_image(directory / f"{item.item_id}_mask.png", item.mask)
