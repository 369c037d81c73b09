"""Image quality metrics and losses: L1, L2, PSNR, SSIM, MS-SSIM.

All metrics operate on max-normalized image pairs (intensities in [0,1]).
SSIM uses the standard 11x11 Gaussian window (sigma 1.5) with stabilizing
constants K1=0.01, K2=0.03 on a unit dynamic range; statistics are taken
over fully contained windows only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "ImagePair",
    "max_normalize",
    "l1",
    "l2",
    "psnr",
    "ssim",
    "ms_ssim",
    "ssim_loss",
    "ms_ssim_loss",
    "weighted_combo",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_LEVELS = 5


@dataclass(frozen=True)
class ImagePair:
    """Candidate/reference images of equal shape with intensities in [0,1]."""

    candidate: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.candidate, dtype=np.float64)
        r = np.asarray(self.reference, dtype=np.float64)
        if c.shape != r.shape:
            raise ValueError(f"shape mismatch: {c.shape} vs {r.shape}")
        if c.ndim != 2:
            raise ValueError("images must be 2D")
        for name, img in (("candidate", c), ("reference", r)):
            if img.min() < -1e-9 or img.max() > 1.0 + 1e-9:
                raise ValueError(f"{name} intensities must lie in [0,1]; max-normalize first")
        object.__setattr__(self, "candidate", c)
        object.__setattr__(self, "reference", r)


def max_normalize(image: np.ndarray) -> np.ndarray:
    """Scale so the maximum is 1 (idempotent; zero images pass through)."""
    img = np.asarray(image, dtype=np.float64)
    peak = img.max()
    return img / peak if peak > 0 else img.copy()


def l1(pair: ImagePair) -> float:
    """Pixel-wise mean absolute error."""
    return float(np.mean(np.abs(pair.candidate - pair.reference)))


def l2(pair: ImagePair) -> float:
    """Pixel-wise mean squared error."""
    return float(np.mean((pair.candidate - pair.reference) ** 2))


def psnr(pair: ImagePair) -> float:
    """10*log10(1/MSE) dB for unit peak; +inf for identical images."""
    mse = l2(pair)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _window_stats(x: np.ndarray, y: np.ndarray, kernel: np.ndarray):
    kf = kernel[::-1, ::-1]  # correlation via convolution
    mu_x = fftconvolve(x, kf, mode="valid")
    mu_y = fftconvolve(y, kf, mode="valid")
    xx = fftconvolve(x * x, kf, mode="valid") - mu_x**2
    yy = fftconvolve(y * y, kf, mode="valid") - mu_y**2
    xy = fftconvolve(x * y, kf, mode="valid") - mu_x * mu_y
    return mu_x, mu_y, np.clip(xx, 0, None), np.clip(yy, 0, None), xy


def _luminance_cs(pair_arrays, window: int, sigma: float):
    x, y = pair_arrays
    if window > min(x.shape):
        raise ValueError(f"SSIM window {window} exceeds image size {x.shape}")
    kernel = _gaussian_kernel(window, sigma)
    mu_x, mu_y, var_x, var_y, cov = _window_stats(x, y, kernel)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2 * cov + c2) / (var_x + var_y + c2)
    return lum, cs


def ssim(pair: ImagePair, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean luminance*contrast*structure over Gaussian-weighted windows."""
    lum, cs = _luminance_cs((pair.candidate, pair.reference), window, sigma)
    return float(np.mean(lum * cs))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    t = img[:h, :w]
    return 0.25 * (t[0::2, 0::2] + t[1::2, 0::2] + t[0::2, 1::2] + t[1::2, 1::2])


def ms_ssim(
    pair: ImagePair,
    levels: int = MS_SSIM_LEVELS,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Multi-scale SSIM with all exponents set to 1.

    Contrast*structure terms are taken at every scale; luminance only at
    the coarsest, weighted per window together with that scale's cs term
    so that a single level reduces exactly to SSIM. Images are scaled
    down by 2x average pooling per level.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    x, y = pair.candidate, pair.reference
    if min(x.shape) < window * 2 ** (levels - 1):
        raise ValueError(
            f"image size {x.shape} too small for {levels} levels with window {window}"
        )
    value = 1.0
    for m in range(levels):
        lum, cs = _luminance_cs((x, y), window, sigma)
        if m == levels - 1:
            value *= float(np.mean(lum * cs))
        else:
            value *= float(np.mean(cs))
            x = _downsample2(x)
            y = _downsample2(y)
    return value


def ssim_loss(pair: ImagePair, **kw) -> float:
    """1 - SSIM, with the SSIM value clamped to [0,1] first."""
    return 1.0 - min(max(ssim(pair, **kw), 0.0), 1.0)


def ms_ssim_loss(pair: ImagePair, **kw) -> float:
    return 1.0 - min(max(ms_ssim(pair, **kw), 0.0), 1.0)


def weighted_combo(loss_i: float, loss_j: float, beta: float) -> float:
    """(1 - beta) * loss_i + beta * loss_j."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return (1.0 - beta) * loss_i + beta * loss_j


def all_metrics(pair: ImagePair, ms_levels: int | None = None) -> dict:
    """Metric table used by the CLI and the evaluation report."""
    out = {
        "l1": l1(pair),
        "l2": l2(pair),
        "psnr_db": psnr(pair),
        "ssim": ssim(pair),
    }
    size = min(pair.candidate.shape)
    if ms_levels is None:
        ms_levels = MS_SSIM_LEVELS
        while ms_levels > 1 and size < SSIM_WINDOW * 2 ** (ms_levels - 1):
            ms_levels -= 1
    out["ms_ssim"] = ms_ssim(pair, levels=ms_levels)
    out["ms_ssim_levels"] = ms_levels
    return out
