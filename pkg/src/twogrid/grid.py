"""GridImage handling: images are plain 2-D float64 numpy arrays."""
from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError


def as_image(x, name: str = "image") -> np.ndarray:
    """Validate ``x`` as a finite 2-D image and return it as float64."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError(f"{name} contains non-finite values")
    return arr


def same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
