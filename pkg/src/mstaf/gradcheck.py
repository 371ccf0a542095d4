"""Central finite-difference oracles for verifying analytic gradients.

The probe functionals accumulate in float64 regardless of the tensor dtype
under test, so the oracle's own noise stays below the tolerances being
checked.
"""

from __future__ import annotations

import numpy as np

FD_STEP_F32 = 1e-3
FD_STEP_F64 = 1e-5
TOL_F32 = 1e-3
TOL_F64 = 1e-6


def fd_step_for(dtype) -> float:
    return FD_STEP_F64 if np.dtype(dtype) == np.dtype(np.float64) else FD_STEP_F32


def tol_for(dtype) -> float:
    return TOL_F64 if np.dtype(dtype) == np.dtype(np.float64) else TOL_F32


def numerical_gradient(f, x: np.ndarray, step: float) -> np.ndarray:
    """Elementwise central differences of scalar-valued ``f`` at ``x``."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def directional_derivative(f, x: np.ndarray, direction: np.ndarray, step: float) -> float:
    """Central-difference derivative of ``f`` along ``direction`` at ``x``."""
    base = x.copy()
    x[...] = base + step * direction
    hi = float(f(x))
    x[...] = base - step * direction
    lo = float(f(x))
    x[...] = base
    return (hi - lo) / (2.0 * step)


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, 1).

    The unit floor makes the measure absolute for sub-unit entries, which is
    where finite differences bottom out anyway.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
    return float(np.max(np.abs(a - n) / denom))
