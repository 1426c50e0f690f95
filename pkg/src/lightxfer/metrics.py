"""Image quality metrics: L1-Norm, PSNR, SSIM and the Lab angle.

Every metric takes two ``(H, W, C)`` images and an optional binary mask. With
a mask, the reduction runs over masked pixels only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .color import rgb_to_lab
from .images import ShapeError, as_image, as_mask, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
LAB_NORM_EPS = 1e-8


def _pair(a, b):
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b)
    return a, b


def l1_norm(a, b, mask=None) -> float:
    """Mean absolute difference over (masked) pixels and channels."""
    a, b = _pair(a, b)
    diff = np.abs(a - b)
    if mask is None:
        return float(diff.mean())
    m = as_mask(mask, a.shape)
    if not m.any():
        raise ValueError("mask selects no pixels")
    return float(diff[m].mean())


def psnr(a, b, mask=None) -> float:
    """Peak signal-to-noise ratio in dB for peak value 1.

    Returns ``math.inf`` for identical images.
    """
    a, b = _pair(a, b)
    sq = (a - b) ** 2
    if mask is None:
        mse = float(sq.mean())
    else:
        m = as_mask(mask, a.shape)
        if not m.any():
            raise ValueError("mask selects no pixels")
        mse = float(sq[m].mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian of length `size`."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _blur_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' filtering over the two leading axes of (H, W, C)
    k = g.size
    x = sliding_window_view(x, k, axis=0) @ g
    x = sliding_window_view(x, k, axis=1) @ g
    return x


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM over the valid region, shape ``(H-10, W-10, C)``."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    mu_a = _blur_valid(a, g)
    mu_b = _blur_valid(b, g)
    var_a = _blur_valid(a * a, g) - mu_a**2
    var_b = _blur_valid(b * b, g) - mu_b**2
    cov = _blur_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b, mask=None) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels.

    A mask is cropped to the valid region and selects which window centres
    enter the mean.
    """
    smap = ssim_map(a, b)
    if mask is None:
        return float(smap.mean())
    m = as_mask(mask, np.shape(a))
    r = SSIM_WINDOW // 2
    m = m[r:-r, r:-r]
    if not m.any():
        raise ValueError("mask selects no SSIM window centres")
    return float(smap[m].mean())


def lab_angle_map(a, b) -> np.ndarray:
    """Per-pixel angle (radians) between the Lab vectors of two linear-RGB images."""
    a, b = _pair(a, b)
    if a.shape[2] != 3:
        raise ShapeError(f"lab angle needs 3-channel images, got {a.shape}")
    la = rgb_to_lab(a)
    lb = rgb_to_lab(b)
    na = np.linalg.norm(la, axis=-1)
    nb = np.linalg.norm(lb, axis=-1)
    ok = (na >= LAB_NORM_EPS) & (nb >= LAB_NORM_EPS)
    cos = np.einsum("hwc,hwc->hw", la, lb) / np.where(ok, na * nb, 1.0)
    return np.where(ok, np.arccos(np.clip(cos, -1.0, 1.0)), 0.0)


def lab_angle(a, b, mask=None) -> float:
    """Mean per-pixel Lab angle. Near-black pixels contribute an angle of 0."""
    ang = lab_angle_map(a, b)
    if mask is None:
        return float(ang.mean())
    m = as_mask(mask, np.shape(ang) + (1,))
    if not m.any():
        raise ValueError("mask selects no pixels")
    return float(ang[m].mean())


@dataclass(frozen=True)
class MetricsReport:
    l1_norm: float
    psnr: float
    ssim: float
    lab_angle: float
    pixel_count: int

    @property
    def identical(self) -> bool:
        return math.isinf(self.psnr)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.identical:
            d["psnr"] = "identical"
        return d


def compute_metrics(a, b, mask=None) -> MetricsReport:
    """All four metrics for one image pair."""
    a, b = _pair(a, b)
    count = a.shape[0] * a.shape[1] if mask is None else int(as_mask(mask, a.shape).sum())
    return MetricsReport(
        l1_norm=l1_norm(a, b, mask),
        psnr=psnr(a, b, mask),
        ssim=ssim(a, b, mask),
        lab_angle=lab_angle(a, b, mask),
        pixel_count=count,
    )
