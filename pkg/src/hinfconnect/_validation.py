"""Input validation helpers shared by the public entry points."""

import numpy as np

from .errors import InvalidInputError


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array.

    Scalars become 1x1 matrices; 1-D input is rejected because row/column
    orientation would be ambiguous.
    """
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_square(M, name="matrix"):
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_shape(arr, shape, name):
    if arr.shape != tuple(shape):
        raise InvalidInputError(
            f"{name} has shape {arr.shape}, expected {tuple(shape)}")


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be a positive finite number")
    return value
