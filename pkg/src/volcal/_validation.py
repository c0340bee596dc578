"""Input validation helpers shared by metrics, estimators and file readers."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import EmptyRegionError, ShapeMismatchError


def check_scores(scores, name="scores", allow_empty=False):
    """Return ``scores`` as a finite 1-D float64 array with values in [0, 1]."""
    arr = check_array(
        np.asarray(scores).reshape(-1) if np.ndim(scores) != 1 else scores,
        ensure_2d=False,
        dtype=np.float64,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_all_finite=True,
        input_name=name,
    )
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_logits(logits, name="logits"):
    arr = np.asarray(logits, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise EmptyRegionError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_binary_labels(labels, name="labels", allow_empty=False):
    """Return ``labels`` as a 1-D int8 array of zeros and ones."""
    arr = np.asarray(labels).reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise EmptyRegionError(f"{name} is empty")
    if arr.dtype == bool:
        return arr.astype(np.int8)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int8)


def check_same_length(*arrays, names=None):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        names = names or [f"array{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={len(a)}" for n, a in zip(names, arrays))
        raise ShapeMismatchError(f"length mismatch: {detail}")


def check_dims(dims):
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValueError(f"dims must be 3 positive integers, got {dims}")
    return dims


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value}")
    return value
