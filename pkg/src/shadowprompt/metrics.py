"""Evaluation metrics, computed region-wise where a shadow mask is given.

PSNR/SSIM/RMSE operate on [0, 1] images; RMSE is reported on the 0-255
scale. Region restriction selects pixels (window centers, for SSIM) where
the region mask is one.
"""

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP = 100.0
REGIONS = ("shadow", "non_shadow", "all")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _region_selector(region, shape):
    if region is None:
        return None
    region = np.asarray(region)
    if region.shape != shape:
        raise ArgumentError(f"region shape {region.shape} does not match image {shape}")
    sel = region.astype(bool)
    if not sel.any():
        raise ArgumentError("region is empty")
    return sel


def _mse(a, b, region):
    sel = _region_selector(region, a.shape[:2])
    diff2 = (a - b) ** 2
    if sel is None:
        return diff2.mean()
    return diff2[sel].mean()


def psnr(a, b, region=None) -> float:
    """10 log10(1 / MSE) with peak 1.0, capped at 100 dB for near-identity."""
    a, b = _check_pair(a, b)
    mse = _mse(a, b, region)
    if mse < 1e-10:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def rmse(a, b, region=None) -> float:
    """Root mean squared difference on the 0-255 scale."""
    a, b = _check_pair(a, b)
    return math.sqrt(_mse(255.0 * a, 255.0 * b, region))


def _luma(img):
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    raise ArgumentError(f"expected an (H, W) or (H, W, 3) image, got {img.shape}")


def _gaussian_kernel1d(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _window_mean(img, k):
    # separable weighted window sum, valid windows only
    t = sliding_window_view(img, SSIM_WINDOW, axis=0) @ k
    return sliding_window_view(t, SSIM_WINDOW, axis=1) @ k


def ssim(a, b, region=None) -> float:
    """Mean SSIM over 11x11 Gaussian windows (sigma 1.5) on luma.

    Windows are fully interior; a window belongs to a region through its
    center pixel.
    """
    a, b = _check_pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ArgumentError(
            f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    la, lb = _luma(a), _luma(b)
    k = _gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _window_mean(la, k)
    mu_b = _window_mean(lb, k)
    var_a = _window_mean(la * la, k) - mu_a ** 2
    var_b = _window_mean(lb * lb, k) - mu_b ** 2
    cov = _window_mean(la * lb, k) - mu_a * mu_b
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    )
    sel = _region_selector(region, a.shape[:2])
    if sel is None:
        return float(ssim_map.mean())
    half = SSIM_WINDOW // 2
    centers = sel[half:-half, half:-half]
    if not centers.any():
        raise ArgumentError("region contains no interior window centers")
    return float(ssim_map[centers].mean())


@dataclass
class RegionReport:
    psnr: Dict[str, float]
    ssim: Dict[str, float]
    rmse: Dict[str, float]

    def to_dict(self) -> Dict[str, float]:
        out = {}
        for metric in ("psnr", "ssim", "rmse"):
            for region in REGIONS:
                out[f"{metric}_{region}"] = getattr(self, metric)[region]
        return out


def _check_binary_mask(m, shape):
    m = np.asarray(m)
    if m.shape != shape:
        raise ArgumentError(f"mask shape {m.shape} does not match image {shape}")
    if not np.isin(m, (0, 1)).all():
        raise ArgumentError("mask must be binary")
    return m.astype(bool)


def region_report(y_hat, y, m) -> RegionReport:
    """PSNR/SSIM/RMSE over shadow pixels, non-shadow pixels, and all pixels."""
    y_hat, y = _check_pair(y_hat, y)
    shadow = _check_binary_mask(m, y.shape[:2])
    if not shadow.any() or shadow.all():
        raise ArgumentError("mask must contain both shadow and non-shadow pixels")
    regions = {"shadow": shadow, "non_shadow": ~shadow, "all": None}
    return RegionReport(
        psnr={name: psnr(y_hat, y, sel) for name, sel in regions.items()},
        ssim={name: ssim(y_hat, y, sel) for name, sel in regions.items()},
        rmse={name: rmse(y_hat, y, sel) for name, sel in regions.items()},
    )


def mask_iou(m_hat, m, threshold: float = 0.5) -> float:
    """Intersection over union of the thresholded prediction; 1.0 if both empty."""
    m_hat = np.asarray(m_hat, dtype=np.float64)
    gt = _check_binary_mask(m, m_hat.shape)
    pred = m_hat > threshold
    union = (pred | gt).sum()
    if union == 0:
        return 1.0
    return float((pred & gt).sum() / union)


def mask_bce(m_hat, m) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    m_hat = np.asarray(m_hat, dtype=np.float64)
    gt = _check_binary_mask(m, m_hat.shape).astype(np.float64)
    p = np.clip(m_hat, 1e-7, 1.0 - 1e-7)
    return float(-(gt * np.log(p) + (1.0 - gt) * np.log(1.0 - p)).mean())
