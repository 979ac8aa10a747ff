"""Shared input checks for points, probabilities, and tolerance parameters."""
from __future__ import annotations

import numpy as np


def check_point(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-d float vector, optionally of fixed dimension."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def check_points(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d array of row points."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has {arr.shape[1]} columns, expected {dim}")
    return arr


def check_prob(p: float, name: str, *, open_zero: bool = True, open_one: bool = False) -> float:
    p = float(p)
    lo_ok = p > 0.0 if open_zero else p >= 0.0
    hi_ok = p < 1.0 if open_one else p <= 1.0
    if not (lo_ok and hi_ok and np.isfinite(p)):
        raise ValueError(f"{name}={p} out of range")
    return p


def check_positive(v: float, name: str) -> float:
    v = float(v)
    if not (np.isfinite(v) and v > 0.0):
        raise ValueError(f"{name} must be positive, got {v}")
    return v
