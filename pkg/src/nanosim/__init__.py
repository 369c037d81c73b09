"""Simulation-supervised nanoscopy data engine.

Synthesizes physically faithful fluorescence microscopy video stacks of
labeled sub-cellular structures, reconstructs super-resolved images with
an eigen-subspace (MUSIC-style) indicator algorithm, and emits paired
noisy/noise-free nanoscopy images plus quality metrics for training
artefact-removal denoisers.
"""

from .geometry import (
    EmitterSet,
    SceneBounds,
    StructureKind,
    StructureSpec,
    generate_scene,
)
from .imaging import ImageGeometry, ImageStack, mean_image, render_stack
from .metrics import ImagePair, l1, l2, ms_ssim, psnr, ssim
from .musical import MusicalParams, NanoscopyImage, reconstruct
from .noise import NoiseModel, NoiseSpec, apply_noise, apply_poisson_camera, measure_sbr
from .optics import OpticsParams, PsfModel, build_psf, psf_at
from .photokinetics import (
    BlinkTrace,
    KineticsParams,
    duty_cycle,
    sample_dwells,
    simulate_trace,
)
from .pipeline import DatasetConfig, evaluate, generate_dataset, generate_pair

__version__ = "0.1.0"

__all__ = [
    "EmitterSet",
    "SceneBounds",
    "StructureKind",
    "StructureSpec",
    "generate_scene",
    "ImageGeometry",
    "ImageStack",
    "mean_image",
    "render_stack",
    "ImagePair",
    "l1",
    "l2",
    "psnr",
    "ssim",
    "ms_ssim",
    "MusicalParams",
    "NanoscopyImage",
    "reconstruct",
    "NoiseModel",
    "NoiseSpec",
    "apply_noise",
    "apply_poisson_camera",
    "measure_sbr",
    "OpticsParams",
    "PsfModel",
    "build_psf",
    "psf_at",
    "BlinkTrace",
    "KineticsParams",
    "duty_cycle",
    "sample_dwells",
    "simulate_trace",
    "DatasetConfig",
    "evaluate",
    "generate_dataset",
    "generate_pair",
    "__version__",
]
