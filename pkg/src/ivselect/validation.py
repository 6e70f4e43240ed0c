"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import InputError


def check_vector(x, name: str, n: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float array, optionally of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InputError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise InputError(f"{name} contains a non-finite value at position {bad}")
    return arr


def check_matrix(x, name: str, n: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 2-d float array, optionally with ``n`` rows."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise InputError(f"{name} has {arr.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(arr)):
        i, j = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name} contains a non-finite value at row {i}, column {j}")
    return arr


def check_binary(x, name: str, n: int | None = None) -> np.ndarray:
    """Validate a {0, 1}-valued vector."""
    arr = check_vector(x, name, n)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        bad = int(np.flatnonzero((arr != 0.0) & (arr != 1.0))[0])
        raise InputError(
            f"{name} must be binary 0/1; value {arr[bad]!r} at position {bad}"
        )
    return arr


def check_seed(seed, name: str = "seed") -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise InputError(f"{name} must be an integer, got {seed!r}")
    return int(seed)
