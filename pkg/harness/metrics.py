"""PSNR and SSIM image quality metrics."""

import logging
import math

import numpy as np
from scipy import ndimage

# Configure logging
logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio in dB, capped at ``PSNR_CAP_DB`` for zero error.

    Raises:
        ValueError: If shapes differ
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        logger.debug("Zero MSE; PSNR capped")
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(max_val * max_val / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    profile = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    window = np.outer(profile, profile)
    return window / window.sum()


def _ssim_plane(a: np.ndarray, b: np.ndarray, window: np.ndarray, max_val: float) -> float:
    def _filter(x: np.ndarray) -> np.ndarray:
        return ndimage.correlate(x, window, mode='reflect')

    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    mu_a, mu_b = _filter(a), _filter(b)
    var_a = _filter(a * a) - mu_a * mu_a
    var_b = _filter(b * b) - mu_b * mu_b
    cov = _filter(a * b) - mu_a * mu_b
    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


def ssim(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """
    Structural similarity with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.

    Borders use half-sample symmetric reflection. Inputs are ``[H, W]``,
    ``[H, W, C]`` or ``[N, H, W, C]``; the result is the mean over images and channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None, :, :, None], b[None, :, :, None]
    elif a.ndim == 3:
        a, b = a[None], b[None]
    window = gaussian_window()
    scores = [
        _ssim_plane(a[n, :, :, c], b[n, :, :, c], window, max_val)
        for n in range(a.shape[0])
        for c in range(a.shape[3])
    ]
    return float(np.mean(scores))
