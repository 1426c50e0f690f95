"""Small helpers shared by everything that handles ``(H, W, C)`` float images."""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes or channel counts do not match."""


class RangeError(ValueError):
    """Raised when a sample falls outside the range an operation accepts."""


def as_image(img, name: str = "image") -> np.ndarray:
    """Return `img` as a float64 ``(H, W, C)`` array, promoting 2-D input to one channel."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"{name}: expected (H, W, C) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise RangeError(f"{name}: non-finite sample at index {tuple(int(i) for i in bad)}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def as_mask(mask, shape: tuple[int, ...]) -> np.ndarray:
    """Coerce a mask to a boolean ``(H, W)`` array matching `shape`'s spatial size."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3:
        if m.shape[2] != 1:
            raise ShapeError(f"mask must be single-channel, got shape {m.shape}")
        m = m[:, :, 0]
    if m.shape != tuple(shape[:2]):
        raise ShapeError(f"mask shape {m.shape} does not match image size {tuple(shape[:2])}")
    return m > 0.5
