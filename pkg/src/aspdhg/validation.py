"""Small argument-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_positive",
    "check_in_open_unit",
    "check_positive_int",
    "check_vector",
    "check_probs",
]


def check_positive(name: str, value: float) -> float:
    """Require a strictly positive finite scalar; return it as float."""
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_in_open_unit(name: str, value: float) -> float:
    """Require a scalar strictly inside (0, 1)."""
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value!r}")
    return value


def check_positive_int(name: str, value: int) -> int:
    """Require an integer >= 1."""
    ivalue = int(value)
    if ivalue != value or ivalue < 1:
        raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
    return ivalue


def check_vector(name: str, x, dim: int | None = None) -> np.ndarray:
    """Coerce to a 1-D float array, optionally enforcing its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def check_probs(probs) -> np.ndarray:
    """Require a proper sampling distribution: all entries > 0, sum 1 within 1e-12."""
    p = check_vector("probs", probs)
    if p.size == 0 or np.any(p <= 0.0):
        raise ValueError("sampling probabilities must all be strictly positive")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"sampling probabilities must sum to 1, got {p.sum()!r}")
    return p
