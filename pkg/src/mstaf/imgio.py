"""PNG image I/O and resampling helpers (float arrays in [0, 1])."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def save_image(path, image: np.ndarray) -> None:
    """Write [3, H, W] (RGB) or [H, W] (grayscale) floats in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path)


def load_image(path) -> np.ndarray:
    """Read an image file as [3, H, W] float32 in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_mask(path, threshold: float = 0.5) -> np.ndarray:
    """Read a grayscale mask file as {0, 1} float32 [H, W]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc
    return (arr >= threshold).astype(np.float32)


def bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample [C, H, W] (or [H, W]) at float coords; outside the frame reads 0."""
    squeeze = image.ndim == 2
    img = image[None] if squeeze else image
    h, w = img.shape[-2:]
    inside = (ys >= 0) & (ys <= h - 1) & (xs >= 0) & (xs <= w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 2 if h > 1 else 0)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 2 if w > 1 else 0)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)
    fx = np.clip(xs - x0, 0.0, 1.0)
    out = (
        img[:, y0, x0] * (1 - fy) * (1 - fx)
        + img[:, y0, x1] * (1 - fy) * fx
        + img[:, y1, x0] * fy * (1 - fx)
        + img[:, y1, x1] * fy * fx
    )
    out = out * inside
    return out[0] if squeeze else out


def nearest_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Nearest-neighbour sampling; outside the frame reads 0."""
    h, w = image.shape[-2:]
    yi = np.rint(ys).astype(np.int64)
    xi = np.rint(xs).astype(np.int64)
    inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
    yi = np.clip(yi, 0, h - 1)
    xi = np.clip(xi, 0, w - 1)
    return image[..., yi, xi] * inside


def resize_image(image: np.ndarray, out_h: int, out_w: int, mode: str = "bilinear") -> np.ndarray:
    """Resize [C, H, W] or [H, W] with align-corners-false sampling."""
    h, w = image.shape[-2:]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    gy, gx = np.meshgrid(np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1), indexing="ij")
    if mode == "nearest":
        return nearest_sample(image, gy, gx)
    return bilinear_sample(image, gy, gx)
