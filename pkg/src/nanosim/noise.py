"""Camera noise models applied to noise-free raw stacks.

The primary model is the Poisson camera: the [0,1]-normalized stack is
mapped to expected counts b*(SNR-1)*I + b and each pixel is drawn from a
Poisson distribution with that mean. Multiplicative speckle and additive
Gaussian variants are provided for generalization studies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .imaging import ImageStack, mean_image

__all__ = [
    "NoiseModel",
    "NoiseSpec",
    "apply_noise",
    "apply_poisson_camera",
    "apply_speckle",
    "apply_gaussian",
    "measure_sbr",
]

DEFAULT_BACKGROUND = 100.0
SBR_BACKGROUND_PERCENTILE = 5.0


class NoiseModel(enum.Enum):
    POISSON_CAMERA = "poisson"
    SPECKLE = "speckle"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseSpec:
    model: NoiseModel = NoiseModel.POISSON_CAMERA
    snr: float = 3.0  # Poisson camera only
    background: float = DEFAULT_BACKGROUND  # camera counts, Poisson camera only
    variance: float = 0.1  # relative to max intensity squared, speckle/Gaussian
    seed: int | None = None

    def __post_init__(self):
        if self.model is NoiseModel.POISSON_CAMERA and self.snr <= 1:
            raise ValueError("Poisson camera model requires snr > 1")
        if self.background <= 0:
            raise ValueError("background must be positive")
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    def metadata(self) -> dict:
        return {
            "model": self.model.value,
            "snr": self.snr,
            "background": self.background,
            "variance": self.variance,
            "seed": self.seed,
        }


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def apply_noise(stack: ImageStack, spec: NoiseSpec, rng=None) -> ImageStack:
    rng = _as_rng(spec.seed if rng is None else rng)
    if spec.model is NoiseModel.POISSON_CAMERA:
        return apply_poisson_camera(stack, spec.snr, spec.background, rng)
    if spec.model is NoiseModel.SPECKLE:
        return apply_speckle(stack, spec.variance, rng)
    return apply_gaussian(stack, spec.variance, rng)


def apply_poisson_camera(
    stack: ImageStack,
    snr: float = 3.0,
    background: float = DEFAULT_BACKGROUND,
    rng=None,
) -> ImageStack:
    """Poisson draw around b*(SNR-1)*I + b; integer counts stored as reals."""
    if snr <= 1:
        raise ValueError("snr must exceed 1")
    if abs(stack.max() - 1.0) > 1e-6:
        raise ValueError(
            f"stack max is {stack.max():.6g}, expected 1: normalize the stack "
            "before applying the Poisson camera model"
        )
    rng = _as_rng(rng)
    mean = background * (snr - 1.0) * stack.frames + background
    noisy = rng.poisson(mean).astype(np.float64)
    return ImageStack(noisy, stack.pixel_size_nm, stack.optics)


def apply_speckle(stack: ImageStack, variance_rel: float, rng=None) -> ImageStack:
    """Multiplicative noise: out = I + I*n, n ~ N(0, variance_rel * max(I)^2)."""
    if variance_rel <= 0:
        raise ValueError("variance must be positive")
    rng = _as_rng(rng)
    sigma = np.sqrt(variance_rel) * stack.max()
    n = rng.normal(0.0, sigma, size=stack.shape)
    out = np.clip(stack.frames * (1.0 + n), 0.0, None)
    return ImageStack(out, stack.pixel_size_nm, stack.optics)


def apply_gaussian(stack: ImageStack, variance_rel: float, rng=None) -> ImageStack:
    """Additive noise: out = I + n, n ~ N(0, variance_rel * max(I)^2)."""
    if variance_rel <= 0:
        raise ValueError("variance must be positive")
    rng = _as_rng(rng)
    sigma = np.sqrt(variance_rel) * stack.max()
    out = np.clip(stack.frames + rng.normal(0.0, sigma, size=stack.shape), 0.0, None)
    return ImageStack(out, stack.pixel_size_nm, stack.optics)


def measure_sbr(stack: ImageStack) -> float:
    """Peak of the temporal-mean image over the estimated background level.

    The background is taken as the 5th percentile of the mean image, which
    is robust to the signal occupying a moderate fraction of the field.
    """
    m = mean_image(stack)
    background = float(np.percentile(m, SBR_BACKGROUND_PERCENTILE))
    if background <= 0:
        return float("inf")
    return float(m.max()) / background
