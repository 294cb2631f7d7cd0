"""Input-validation helpers shared by the estimators."""

import numpy as np

from .errors import DataValidationError


def as_float_vector(y, name="y"):
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise DataValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


def as_float_matrix(X, name="X"):
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise DataValidationError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains non-finite values")
    return arr


def check_same_length(*pairs):
    """Check (name, sequence) pairs all share one length; return it."""
    lengths = {name: len(seq) for name, seq in pairs}
    distinct = set(lengths.values())
    if len(distinct) > 1:
        raise DataValidationError(f"length mismatch: {lengths}")
    return distinct.pop()


def check_probability_vector(w, name="weights", tol=1e-9):
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 1:
        raise DataValidationError(f"{name} must be one-dimensional")
    if np.any(arr < -tol) or not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} must be nonnegative and finite")
    total = arr.sum()
    if total <= 0:
        raise DataValidationError(f"{name} must have positive mass")
    return arr
