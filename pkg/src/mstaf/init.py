"""Parameter initializers (all deterministic given an explicit Generator)."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, default_dtype


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=None) -> Tensor:
    """N(0, std^2) with redraws outside +/- 2 std."""
    dtype = np.dtype(dtype) if dtype is not None else default_dtype()
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return Tensor(out.astype(dtype), requires_grad=True)


def zeros(shape, dtype=None) -> Tensor:
    dtype = np.dtype(dtype) if dtype is not None else default_dtype()
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape, dtype=None) -> Tensor:
    dtype = np.dtype(dtype) if dtype is not None else default_dtype()
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)
