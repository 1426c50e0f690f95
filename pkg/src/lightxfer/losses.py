"""Differentiable training objectives.

The full objective is::

    L = L_DR + lambda1 * L_FR + lambda2 * L_DSSIM + lambda3 * L_Lab

with an optional plain L1 photometric term used only in ablations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .color import DELTA, DELTA3, RGB_TO_XYZ, WHITE_D65
from .metrics import SSIM_C1, SSIM_C2, SSIM_WINDOW, gaussian_window

# Cosine clamp for the Lab angle; keeps arccos' derivative finite.
LAB_COS_EPS = 1e-7
LAB_NORM_EPS = 1e-8


@dataclass(frozen=True)
class LossConfig:
    use_fr: bool = True
    use_dssim: bool = True
    use_lab: bool = True
    use_l1: bool = False
    lambda1: float = 0.05
    lambda2: float = 0.5
    lambda3: float = 0.5
    lambda_l1: float = 1.0
    fr_block_index: int = 3

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda_l1) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.fr_block_index not in (1, 2, 3):
            raise ValueError(f"fr_block_index must be 1, 2 or 3, got {self.fr_block_index}")

    def to_dict(self) -> dict:
        return asdict(self)


LOSS_SETS = {
    "l1": dict(use_fr=False, use_dssim=False, use_lab=False, use_l1=True),
    "fr": dict(use_fr=True, use_dssim=False, use_lab=False, use_l1=False),
    "fr+dssim": dict(use_fr=True, use_dssim=True, use_lab=False, use_l1=False),
    "full": dict(use_fr=True, use_dssim=True, use_lab=True, use_l1=False),
    "full+l1": dict(use_fr=True, use_dssim=True, use_lab=True, use_l1=True),
    "dr": dict(use_fr=False, use_dssim=False, use_lab=False, use_l1=False),
}


def loss_config(name: str, **overrides) -> LossConfig:
    """A named loss set (``"full"``, ``"l1"``, ...); L_DR is always included."""
    try:
        flags = LOSS_SETS[name]
    except KeyError:
        raise ValueError(f"unknown loss set {name!r}; choose from {sorted(LOSS_SETS)}") from None
    return LossConfig(**{**flags, **overrides})


class FeatureExtractor:
    """Frozen random conv pyramid standing in for a pretrained feature network.

    Block ``j`` is ``conv3x3 -> leaky_relu -> conv3x3/stride 2``; the weights
    are drawn once from `seed` and never receive gradients.
    """

    def __init__(self, seed: int = 1234, channels=(16, 32, 64), dtype=None):
        rng = np.random.default_rng(seed)
        dtype = dtype or ad.get_default_dtype()
        self.seed = seed
        self.channels = tuple(channels)
        self.weights = []
        cin = 3
        for c in self.channels:
            w1 = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), (c, cin, 3, 3))
            w2 = rng.normal(0.0, np.sqrt(2.0 / (c * 9)), (c, c, 3, 3))
            self.weights.append((Tensor(w1, dtype=dtype), Tensor(w2, dtype=dtype)))
            cin = c

    def astype(self, dtype) -> "FeatureExtractor":
        out = FeatureExtractor.__new__(FeatureExtractor)
        out.seed, out.channels = self.seed, self.channels
        out.weights = [(Tensor(a.data, dtype=dtype), Tensor(b.data, dtype=dtype)) for a, b in self.weights]
        return out

    def features(self, x: Tensor, j: int) -> Tensor:
        """Output of block `j` (1-based)."""
        if min(x.shape[2:]) < 2**j:
            raise ValueError(f"image {x.shape[2:]} too small for feature block {j}")
        for w1, w2 in self.weights[:j]:
            x = ad.leaky_relu(ad.conv2d(x, w1, padding=1))
            x = ad.conv2d(x, w2, stride=2, padding=1)
        return x


def _check(a: Tensor, b, what: str):
    b = ad.as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return b


def loss_dr(D: Tensor, R: Tensor, D_bar, R_bar) -> Tensor:
    """mean|R - R_bar| + mean|D - D_bar|."""
    D_bar = _check(D, D_bar, "loss_dr D")
    R_bar = _check(R, R_bar, "loss_dr R")
    return ad.abs_mean(R - R_bar) + ad.abs_mean(D - D_bar)


def loss_l1(I_t: Tensor, I_bar) -> Tensor:
    I_bar = _check(I_t, I_bar, "loss_l1")
    return ad.abs_mean(I_t - I_bar)


def loss_fr(I_t: Tensor, I_bar, extractor: FeatureExtractor, j: int = 3) -> Tensor:
    """Mean absolute difference of block-`j` features."""
    I_bar = _check(I_t, I_bar, "loss_fr")
    return ad.abs_mean(extractor.features(I_t, j) - extractor.features(I_bar, j))


def _blur(x: Tensor, window: Tensor) -> Tensor:
    n, c, h, w = x.shape
    y = ad.conv2d(x.reshape(n * c, 1, h, w), window)
    return y.reshape(n, c, y.shape[2], y.shape[3])


def ssim_tensor(a: Tensor, b) -> Tensor:
    """Mean Gaussian-window SSIM over the valid region, as a differentiable scalar."""
    b = _check(a, b, "ssim")
    if min(a.shape[2:]) < SSIM_WINDOW:
        raise ValueError(f"image {a.shape[2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    window = Tensor(np.outer(g, g)[None, None], dtype=a.dtype)
    mu_a, mu_b = _blur(a, window), _blur(b, window)
    var_a = _blur(a * a, window) - mu_a * mu_a
    var_b = _blur(b * b, window) - mu_b * mu_b
    cov = _blur(a * b, window) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return ad.mean(num / den)


def loss_dssim(I_t: Tensor, I_bar) -> Tensor:
    """(1 - SSIM) / 2."""
    return ad.scale(1.0 - ssim_tensor(I_t, I_bar), 0.5)


def rgb_to_lab_tensor(x: Tensor) -> Tensor:
    """NCHW linear RGB to L*a*b* on the tape."""
    to_xyz = Tensor((RGB_TO_XYZ / WHITE_D65[:, None])[:, :, None, None], dtype=x.dtype)
    t = ad.conv2d(x, to_xyz)
    cube = ad.power(ad.clamp(t, DELTA3, None), 1.0 / 3.0)
    linear = ad.scale(t, 1.0 / (3 * DELTA**2)) + 4.0 / 29.0
    f = ad.where(t.data > DELTA3, cube, linear)
    to_lab = Tensor(np.array([[0, 116, 0], [500, -500, 0], [0, 200, -200]], dtype=np.float64)[:, :, None, None], dtype=x.dtype)
    offset = Tensor(np.array([-16.0, 0.0, 0.0]), dtype=x.dtype)
    return ad.conv2d(f, to_lab, offset)


def loss_lab(I_t: Tensor, I_bar) -> Tensor:
    """Mean per-pixel angle between Lab vectors; inputs are clamped to [0, 1] first.

    Pixels where either Lab vector is shorter than 1e-8 are left out of the mean.
    """
    I_bar = _check(I_t, I_bar, "loss_lab")
    if I_t.shape[1] != 3:
        raise ValueError(f"loss_lab needs 3-channel images, got {I_t.shape}")
    la = rgb_to_lab_tensor(ad.clamp(I_t, 0.0, 1.0))
    lb = rgb_to_lab_tensor(ad.clamp(I_bar, 0.0, 1.0))
    dot = ad.sum_(la * lb, axis=1)
    na2 = ad.sum_(la * la, axis=1)
    nb2 = ad.sum_(lb * lb, axis=1)
    valid = (np.sqrt(na2.data) >= LAB_NORM_EPS) & (np.sqrt(nb2.data) >= LAB_NORM_EPS)
    denom = ad.sqrt(na2 * nb2 + Tensor((~valid).astype(la.dtype), dtype=la.dtype))
    cos = ad.clamp(dot / denom, -1.0 + LAB_COS_EPS, 1.0 - LAB_COS_EPS)
    angle = ad.arccos(cos) * Tensor(valid.astype(la.dtype), dtype=la.dtype)
    return ad.scale(ad.sum_(angle), 1.0 / max(int(valid.sum()), 1))


def loss_terms(fwd, batch: dict, cfg: LossConfig, extractor: FeatureExtractor | None = None) -> dict:
    """Every enabled term, unweighted, keyed by name.

    `batch` needs ``D_bar``, ``R_bar`` and ``I_t_bar`` NCHW arrays.
    """
    terms = {"dr": loss_dr(fwd.D, fwd.R, batch["D_bar"], batch["R_bar"])}
    I_bar = batch["I_t_bar"]
    if cfg.use_fr:
        if extractor is None:
            raise ValueError("feature reconstruction loss needs an extractor")
        terms["fr"] = loss_fr(fwd.I_t, I_bar, extractor, cfg.fr_block_index)
    if cfg.use_dssim:
        terms["dssim"] = loss_dssim(fwd.I_t, I_bar)
    if cfg.use_lab:
        terms["lab"] = loss_lab(fwd.I_t, I_bar)
    if cfg.use_l1:
        terms["l1"] = loss_l1(fwd.I_t, I_bar)
    return terms


def weights(cfg: LossConfig) -> dict:
    return {"dr": 1.0, "fr": cfg.lambda1, "dssim": cfg.lambda2, "lab": cfg.lambda3, "l1": cfg.lambda_l1}


def combine(terms: dict, cfg: LossConfig) -> Tensor:
    """Weighted sum of precomputed terms."""
    w = weights(cfg)
    total = terms["dr"]
    for name in ("fr", "dssim", "lab", "l1"):
        if name in terms:
            total = total + ad.scale(terms[name], w[name])
    return total


def total_loss(fwd, batch: dict, cfg: LossConfig, extractor: FeatureExtractor | None = None) -> Tensor:
    return combine(loss_terms(fwd, batch, cfg, extractor), cfg)
