"""Training losses: L1, L2, SSIM, MS-SSIM, VGG-perceptual, and weighted combos.

SSIM and MS-SSIM mirror the evaluation metrics used by the dataset
generator bit-for-bit in convention (11x11 Gaussian window, sigma 1.5,
K1=0.01/K2=0.03 on unit dynamic range, statistics over fully contained
windows, luminance only at the coarsest scale) so loss values and metric
values are directly comparable.
"""

from __future__ import annotations

import enum
import math

import torch
import torch.nn.functional as F
from torchvision.models import vgg16

__all__ = ["Loss", "build_loss", "ssim", "ms_ssim", "vgg_loss", "VggFeatures", "psnr"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_LEVELS = 5
VGG_LAYERS = (4, 9, 16, 23)


class Loss(enum.Enum):
    L1 = "l1"
    L2 = "l2"
    SSIM = "ssim"
    MSSSIM = "msssim"
    VGG = "vgg"
    MSSSIM_L1 = "msssim_l1"  # (1-beta)*MS-SSIM-loss + beta*L1, beta = 0.6
    SSIM_L1 = "ssim_l1"  # (1-beta)*SSIM-loss + beta*L1, beta = 0.4


def _gaussian_kernel(size: int, sigma: float, dtype, device) -> torch.Tensor:
    ax = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(ax**2) / (2.0 * sigma**2))
    k = torch.outer(g, g)
    return (k / k.sum()).view(1, 1, size, size)


def _luminance_cs(x: torch.Tensor, y: torch.Tensor, window: int, sigma: float):
    if window > min(x.shape[-2:]):
        raise ValueError(f"SSIM window {window} exceeds image size {tuple(x.shape[-2:])}")
    kernel = _gaussian_kernel(window, sigma, x.dtype, x.device)
    mu_x = F.conv2d(x, kernel)
    mu_y = F.conv2d(y, kernel)
    var_x = torch.clamp(F.conv2d(x * x, kernel) - mu_x**2, min=0.0)
    var_y = torch.clamp(F.conv2d(y * y, kernel) - mu_y**2, min=0.0)
    cov = F.conv2d(x * y, kernel) - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2 * cov + c2) / (var_x + var_y + c2)
    return lum, cs


def ssim(
    x: torch.Tensor, y: torch.Tensor, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA
) -> torch.Tensor:
    """Mean luminance*contrast*structure over valid windows; (N,1,H,W) input."""
    lum, cs = _luminance_cs(x, y, window, sigma)
    return (lum * cs).mean()


def _downsample2(img: torch.Tensor) -> torch.Tensor:
    h = (img.shape[-2] // 2) * 2
    w = (img.shape[-1] // 2) * 2
    return F.avg_pool2d(img[..., :h, :w], kernel_size=2)


def default_levels(size: int, window: int = SSIM_WINDOW) -> int:
    levels = MS_SSIM_LEVELS
    while levels > 1 and size < window * 2 ** (levels - 1):
        levels -= 1
    return levels


def ms_ssim(
    x: torch.Tensor,
    y: torch.Tensor,
    levels: int | None = None,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> torch.Tensor:
    """Multi-scale SSIM, exponents 1, luminance at the coarsest scale only."""
    if levels is None:
        levels = default_levels(min(x.shape[-2:]), window)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(x.shape[-2:]) < window * 2 ** (levels - 1):
        raise ValueError(f"image too small for {levels} levels with window {window}")
    value = torch.ones((), dtype=x.dtype, device=x.device)
    for m in range(levels):
        lum, cs = _luminance_cs(x, y, window, sigma)
        if m == levels - 1:
            value = value * (lum * cs).mean()
        else:
            value = value * cs.mean()
            x = _downsample2(x)
            y = _downsample2(y)
    return value


def _structural_loss(value: torch.Tensor) -> torch.Tensor:
    return 1.0 - torch.clamp(value, 0.0, 1.0)


class VggFeatures(torch.nn.Module):
    """Frozen VGG-16 activations at feature layers 4, 9, 16 and 23.

    Weights are randomly initialized from a fixed seed: pretrained weights
    are unavailable offline, and fixed random features still define a
    deterministic, Lipschitz perceptual distance that is zero iff the
    activations agree. Single-channel inputs are replicated to RGB.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.features = vgg16(weights=None).features[: max(VGG_LAYERS) + 1]
        self.features.eval()
        for p in self.features.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = x.expand(-1, 3, -1, -1)
        out = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in VGG_LAYERS:
                out.append(x)
        return out


def vgg_loss(x: torch.Tensor, y: torch.Tensor, extractor: VggFeatures) -> torch.Tensor:
    """Sum over the tapped layers of mean absolute activation differences."""
    total = torch.zeros((), dtype=x.dtype, device=x.device)
    for ax, ay in zip(extractor(x), extractor(y)):
        total = total + (ax - ay).abs().mean()
    return total


def build_loss(loss: Loss, vgg_seed: int = 0):
    """Callable (prediction, target) -> scalar tensor for the chosen loss."""
    if loss is Loss.L1:
        return lambda p, t: (p - t).abs().mean()
    if loss is Loss.L2:
        return lambda p, t: ((p - t) ** 2).mean()
    if loss is Loss.SSIM:
        return lambda p, t: _structural_loss(ssim(p, t))
    if loss is Loss.MSSSIM:
        return lambda p, t: _structural_loss(ms_ssim(p, t))
    if loss is Loss.VGG:
        extractor = VggFeatures(seed=vgg_seed)
        return lambda p, t: vgg_loss(p, t, extractor)
    if loss is Loss.MSSSIM_L1:
        beta = 0.6
        return lambda p, t: (1.0 - beta) * _structural_loss(ms_ssim(p, t)) + beta * (
            p - t
        ).abs().mean()
    if loss is Loss.SSIM_L1:
        beta = 0.4
        return lambda p, t: (1.0 - beta) * _structural_loss(ssim(p, t)) + beta * (
            p - t
        ).abs().mean()
    raise ValueError(f"unknown loss {loss}")


def psnr(x: torch.Tensor, y: torch.Tensor) -> float:
    """10*log10(1/MSE) for unit peak; +inf when identical."""
    mse = float(((x - y) ** 2).mean())
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
