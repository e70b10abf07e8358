"""Input validation helpers shared across the toolkit.

These normalise user input to float64 numpy arrays and raise
InvalidInputError subclasses with messages that name the offending argument.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import InputTooShortError, InvalidInputError, NumericError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 array, optionally enforcing dimensionality."""
    try:
        arr = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


def check_min_length(arr: np.ndarray, min_len: int, name: str) -> np.ndarray:
    if arr.shape[0] < min_len:
        raise InputTooShortError(f"{name} has length {arr.shape[0]}, need at least {min_len}")
    return arr


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise InvalidInputError(f"{name} must be positive, got {value!r}")
    return value


def check_nonnegative(value: float, name: str) -> float:
    if value < 0:
        raise InvalidInputError(f"{name} must be >= 0, got {value!r}")
    return value


def check_positive_int(value: int, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative_int(value: int, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 0:
        raise InvalidInputError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_unit_interval(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def check_frame_stack(frames, name: str = "frames") -> np.ndarray:
    """Validate a (T, H, W) stack of grayscale frames with values in [0, 1]."""
    arr = as_float_array(frames, name, ndim=3)
    check_finite(arr, name)
    if arr.shape[0] < 2:
        raise InputTooShortError(f"{name} needs at least 2 frames, got {arr.shape[0]}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError(f"{name} values must lie in [0, 1]")
    return arr


def check_sorted_unique_ints(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise InvalidInputError(f"{name} must contain integers")
        arr = arr.astype(np.int64)
    arr = arr.astype(np.int64, copy=False)
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise InvalidInputError(f"{name} must be strictly increasing")
    return arr
