import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import correlate2d
from skimage.metrics import structural_similarity

from lightxfer.color import lab_to_rgb, rgb_to_lab
from lightxfer.images import ShapeError
from lightxfer.metrics import (
    SSIM_C1,
    SSIM_C2,
    compute_metrics,
    l1_norm,
    lab_angle,
    psnr,
    ssim,
)

images = arrays(np.float64, (12, 13, 3), elements=st.floats(0, 1))


def ssim_oracle(a, b):
    """Direct 2-D correlation with the full Gaussian kernel, channel by channel."""
    x = np.arange(11) - 5.0
    g = np.exp(-x**2 / (2 * 1.5**2))
    k = np.outer(g, g) / np.outer(g, g).sum()
    vals = []
    for c in range(a.shape[2]):
        A, B = a[:, :, c], b[:, :, c]
        mu_a, mu_b = correlate2d(A, k, "valid"), correlate2d(B, k, "valid")
        saa = correlate2d(A * A, k, "valid") - mu_a**2
        sbb = correlate2d(B * B, k, "valid") - mu_b**2
        sab = correlate2d(A * B, k, "valid") - mu_a * mu_b
        m = (2 * mu_a * mu_b + SSIM_C1) * (2 * sab + SSIM_C2) / ((mu_a**2 + mu_b**2 + SSIM_C1) * (saa + sbb + SSIM_C2))
        vals.append(m.mean())
    return float(np.mean(vals))


def test_l1_cases(rng):
    a = rng.random((8, 9, 3))
    assert l1_norm(a, a) == 0.0
    assert l1_norm(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.1)) == pytest.approx(0.1, abs=1e-15)


def test_l1_matches_loop(rng):
    a, b = rng.random((7, 6, 3)), rng.random((7, 6, 3))
    total = 0.0
    for i in range(7):
        for j in range(6):
            for c in range(3):
                total += abs(a[i, j, c] - b[i, j, c])
    assert abs(l1_norm(a, b) - total / (7 * 6 * 3)) <= 1e-12


def test_l1_masked(rng):
    a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
    m = np.zeros((6, 6))
    m[2:4, 1:5] = 1
    assert l1_norm(a, b, m) == pytest.approx(np.abs(a - b)[2:4, 1:5].mean(), abs=1e-15)


def test_psnr_closed_forms():
    a = np.zeros((5, 5, 3))
    assert abs(psnr(a, a + 0.1) - 20.0) <= 1e-9
    assert psnr(a, a + 1.0) == 0.0
    assert psnr(a, a) == math.inf


def test_psnr_matches_loop(rng):
    a, b = rng.random((6, 5, 3)), rng.random((6, 5, 3))
    se = sum((a[i, j, c] - b[i, j, c]) ** 2 for i in range(6) for j in range(5) for c in range(3))
    assert abs(psnr(a, b) - 10 * math.log10(1 / (se / 90))) <= 1e-9


def test_ssim_identity_and_constants(rng):
    a = rng.random((16, 16, 3))
    assert abs(ssim(a, a) - 1.0) <= 1e-9
    s = ssim(np.zeros((16, 16, 1)), np.ones((16, 16, 1)))
    assert abs(s - SSIM_C1 / (1 + SSIM_C1)) <= 1e-7


def test_ssim_oracle_100_pairs(rng):
    for _ in range(100):
        a, b = rng.random((32, 32, 3)), rng.random((32, 32, 3))
        assert abs(ssim(a, b) - ssim_oracle(a, b)) <= 1e-6


def test_ssim_matches_scikit_image(rng):
    a = rng.random((40, 36, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0, channel_axis=2)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_ssim_too_small():
    with pytest.raises(ShapeError):
        ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))


def test_lab_angle_self_is_zero(rng):
    a = 0.05 + 0.9 * rng.random((8, 8, 3))
    assert lab_angle(a, a) <= 1e-7


def test_lab_angle_orthogonal_pairs():
    # pick two in-gamut colours whose Lab vectors are perpendicular
    la = np.array([30.0, 20.0, -10.0])
    lb = np.array([20.0, -20.0, 20.0])
    assert abs(la @ lb) < 1e-12
    a, b = lab_to_rgb(la), lab_to_rgb(lb)
    np.testing.assert_allclose(rgb_to_lab(a), la, atol=1e-6)
    np.testing.assert_allclose(rgb_to_lab(b), lb, atol=1e-6)
    img_a, img_b = np.tile(a, (3, 4, 1)), np.tile(b, (3, 4, 1))
    assert abs(lab_angle(img_a, img_b) - math.pi / 2) <= 1e-6


def test_lab_angle_red_green():
    red = np.array([53.2408, 80.0925, 67.2032])
    green = np.array([87.7347, -86.1827, 83.1793])
    want = math.acos(red @ green / (np.linalg.norm(red) * np.linalg.norm(green)))
    img_r = np.tile([1.0, 0.0, 0.0], (4, 4, 1))
    img_g = np.tile([0.0, 1.0, 0.0], (4, 4, 1))
    assert lab_angle(img_r, img_g) == pytest.approx(want, abs=1e-5)


def test_lab_angle_black_pixels_contribute_zero():
    a = np.zeros((2, 2, 3))
    b = np.full((2, 2, 3), 0.5)
    assert lab_angle(a, b) == 0.0


def test_lab_angle_masked(rng):
    a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
    m = np.zeros((6, 6))
    m[0, 0] = 1
    assert lab_angle(a, b, m) == pytest.approx(lab_angle(a[:1, :1], b[:1, :1]), abs=1e-15)


@given(images, images)
def test_metrics_symmetric(a, b):
    assert abs(l1_norm(a, b) - l1_norm(b, a)) <= 1e-9
    assert abs(lab_angle(a, b) - lab_angle(b, a)) <= 1e-9
    p, q = psnr(a, b), psnr(b, a)
    assert p == q or abs(p - q) <= 1e-9
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-9


@given(images, images)
def test_metric_ranges(a, b):
    assert abs(ssim(a, b)) <= 1 + 1e-12
    assert 0 <= lab_angle(a, b) <= math.pi


def test_golden_pair_is_bit_stable():
    rng = np.random.default_rng(7)
    a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
    first = compute_metrics(a, b)
    for _ in range(3):
        assert compute_metrics(a.copy(), b.copy()) == first


def test_report_flags_identical(rng):
    a = rng.random((12, 12, 3))
    rep = compute_metrics(a, a)
    assert rep.identical
    d = rep.to_dict()
    assert d["psnr"] == "identical" and d["l1_norm"] == 0.0 and d["ssim"] == pytest.approx(1.0)
    assert d["pixel_count"] == 144


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        l1_norm(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
