"""sRGB transfer curves and CIE 1976 L*a*b* conversion (D65 white, 2 degree observer).

All conversions take linear RGB; display-encoded images go through
:func:`srgb_to_linear` first.
"""

from __future__ import annotations

import numpy as np

from .images import RangeError, ShapeError

# IEC 61966-2-1 linear sRGB -> XYZ.
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
# Reference white is the image of linear (1, 1, 1), so neutral grays land on a* = b* = 0.
WHITE_D65 = RGB_TO_XYZ.sum(axis=1)

DELTA = 6.0 / 29.0
DELTA3 = DELTA**3


def srgb_to_linear(img) -> np.ndarray:
    """Apply the sRGB EOTF per channel. Input samples must lie in [0, 1]."""
    x = np.asarray(img, dtype=np.float64)
    bad = (x < 0.0) | (x > 1.0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise RangeError(f"srgb sample {float(x[idx])!r} at pixel index {idx} outside [0, 1]")
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(img) -> np.ndarray:
    """Inverse EOTF; input is clipped to [0, 1] first."""
    x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def _f(t):
    return np.where(t > DELTA3, np.cbrt(np.maximum(t, DELTA3)), t / (3 * DELTA**2) + 4.0 / 29.0)


def _f_inv(s):
    return np.where(s > DELTA, s**3, 3 * DELTA**2 * (s - 4.0 / 29.0))


def rgb_to_lab(img) -> np.ndarray:
    """Convert a linear-RGB ``(..., 3)`` array to L*a*b*.

    Accepts a single pixel of shape ``(3,)`` as well as images. The caller is
    responsible for clamping to [0, 1].
    """
    rgb = np.asarray(img, dtype=np.float64)
    if rgb.shape[-1:] != (3,):
        raise ShapeError(f"rgb_to_lab expects 3 channels, got shape {rgb.shape}")
    xyz = rgb @ RGB_TO_XYZ.T
    fx, fy, fz = (_f(xyz[..., i] / WHITE_D65[i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb(lab, return_clipped: bool = False):
    """Inverse of :func:`rgb_to_lab`.

    Out-of-gamut results are clipped to [0, 1]. With ``return_clipped=True``
    a boolean array marking the clipped pixels is returned as well.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.shape[-1:] != (3,):
        raise ShapeError(f"lab_to_rgb expects 3 channels, got shape {lab.shape}")
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * WHITE_D65
    rgb = xyz @ XYZ_TO_RGB.T
    clipped = np.any((rgb < 0.0) | (rgb > 1.0), axis=-1)
    rgb = np.clip(rgb, 0.0, 1.0)
    if return_clipped:
        return rgb, clipped
    return rgb
