"""Small input-validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np


def as_float32_grid(data, name: str = "data") -> np.ndarray:
    """Coerce to a finite 2-D float32 array; raise ValueError otherwise."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_finite_2d(x, name: str = "X") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_simplex(v, name: str = "vector", tol: float = 1e-6) -> np.ndarray:
    """Validate a probability vector: components >= 0, sum == 1 within tol."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a 1-D vector")
    if not np.all(np.isfinite(arr)) or np.any(arr < -tol):
        raise ValueError(f"{name} has negative or non-finite components")
    if abs(float(arr.sum()) - 1.0) > tol:
        raise ValueError(f"{name} does not sum to 1 (sum={arr.sum():.8f})")
    return np.clip(arr, 0.0, None)
