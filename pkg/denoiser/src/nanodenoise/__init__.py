"""Artefact-removal denoiser for reconstructed nanoscopy images.

Consumes paired noisy/clean nanoscopy datasets in the simulator's
raw-float32 + JSON-sidecar format and trains encoder-decoder networks
(U-Net / FPN over ResNet encoders) with pixel, structural, and perceptual
losses to map noisy reconstructions to their noise-free counterparts.
"""

from .dataio import PairedDataset, load_image, load_manifest, max_normalize, save_image
from .losses import Loss, build_loss, ms_ssim, psnr, ssim, vgg_loss, VggFeatures
from .models import Architecture, build_model, normalize_head
from .train import (
    TrainConfig,
    TrainResult,
    evaluate_model,
    infer,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "PairedDataset",
    "load_image",
    "load_manifest",
    "max_normalize",
    "save_image",
    "Loss",
    "build_loss",
    "ssim",
    "ms_ssim",
    "vgg_loss",
    "VggFeatures",
    "psnr",
    "Architecture",
    "build_model",
    "normalize_head",
    "TrainConfig",
    "TrainResult",
    "train",
    "infer",
    "evaluate_model",
    "save_checkpoint",
    "load_checkpoint",
    "__version__",
]
