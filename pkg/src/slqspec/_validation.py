"""Input validation helpers shared by the estimators and functional API."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidInputError


def check_vector(v, n=None, name="v"):
    """Return ``v`` as a finite 1-D float64 array, optionally of length ``n``."""
    try:
        arr = check_array(np.asarray(v, dtype=np.float64).reshape(1, -1),
                          dtype=np.float64, ensure_all_finite=True,
                          ensure_min_features=1).ravel()
    except ValueError as exc:
        raise InvalidInputError(f"{name}: {exc}") from None
    if n is not None and arr.shape[0] != n:
        raise InvalidInputError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def check_square(A, name="A"):
    try:
        arr = check_array(A, dtype=np.float64, ensure_all_finite=True)
    except ValueError as exc:
        raise InvalidInputError(f"{name}: {exc}") from None
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_positive(x, name):
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise InvalidInputError(f"{name} must be positive and finite, got {x}")
    return x


def check_count(x, name, minimum=1):
    if int(x) != x or x < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {x}")
    return int(x)


def check_grid(grid):
    grid = check_vector(grid, name="grid")
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must have >= 2 strictly increasing points")
    return grid
