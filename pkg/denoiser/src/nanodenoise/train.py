"""Training and inference for the nanoscopy artefact-removal denoiser.

Training maps noisy reconstructions to their noise-free counterparts on
random crops of max-normalized image pairs. Checkpoints are the framework's
native format plus a JSON sidecar holding the full training configuration.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .dataio import PairedDataset
from .losses import Loss, build_loss, psnr
from .models import STRIDE, Architecture, build_model

__all__ = ["TrainConfig", "TrainResult", "train", "infer", "evaluate_model",
           "save_checkpoint", "load_checkpoint"]


@dataclass(frozen=True)
class TrainConfig:
    manifest: str
    architecture: Architecture = Architecture.UNET_R34
    loss: Loss = Loss.L1
    learning_rate: float = 0.001
    steps: int = 200
    batch_size: int = 2
    crop_size: int = 128
    split: str = "train"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 1:
            raise ValueError("need at least one optimizer step")
        if self.crop_size % STRIDE != 0:
            raise ValueError(f"crop size must be a multiple of {STRIDE}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["architecture"] = self.architecture.value
        d["loss"] = self.loss.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["architecture"] = Architecture(d["architecture"])
        d["loss"] = Loss(d["loss"])
        return cls(**d)


@dataclass
class TrainResult:
    model: torch.nn.Module
    loss_curve: list
    config: TrainConfig


def _to_tensor(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))[None, None]


def _random_crop_batch(images, rng: np.random.Generator, crop: int, batch: int):
    noisy_batch, clean_batch = [], []
    for _ in range(batch):
        noisy, clean = images[rng.integers(len(images))]
        h, w = noisy.shape
        if h < crop or w < crop:
            raise ValueError(f"images ({h}x{w}) smaller than crop size {crop}")
        y = int(rng.integers(h - crop + 1))
        x = int(rng.integers(w - crop + 1))
        noisy_batch.append(noisy[y : y + crop, x : x + crop])
        clean_batch.append(clean[y : y + crop, x : x + crop])
    to = lambda stack: torch.from_numpy(
        np.ascontiguousarray(np.stack(stack), dtype=np.float32)
    )[:, None]
    return to(noisy_batch), to(clean_batch)


def train(config: TrainConfig) -> TrainResult:
    """Seeded training run; aborts with diagnostics on non-finite loss."""
    dataset = PairedDataset.from_manifest(config.manifest, split=config.split)
    images = [(noisy, clean) for noisy, clean, _ in (dataset[i] for i in range(len(dataset)))]

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_model(config.architecture, seed=config.seed)
    model.train()
    loss_fn = build_loss(config.loss, vgg_seed=config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    curve = []
    for step in range(config.steps):
        noisy, clean = _random_crop_batch(images, rng, config.crop_size, config.batch_size)
        optimizer.zero_grad()
        value = loss_fn(model(noisy), clean)
        if not torch.isfinite(value):
            raise RuntimeError(
                f"non-finite loss {value.item()} at step {step} "
                f"(architecture={config.architecture.value}, loss={config.loss.value})"
            )
        value.backward()
        optimizer.step()
        curve.append(float(value.detach()))
    return TrainResult(model=model, loss_curve=curve, config=config)


@torch.no_grad()
def infer(model: torch.nn.Module, image: np.ndarray) -> np.ndarray:
    """Single deterministic forward pass on a full image."""
    h, w = image.shape
    if h % STRIDE or w % STRIDE:
        raise ValueError(f"image dimensions {h}x{w} must be multiples of {STRIDE}")
    model.eval()
    out = model(_to_tensor(image))
    return out[0, 0].numpy().astype(np.float64)


@torch.no_grad()
def evaluate_model(model: torch.nn.Module, manifest, split: str = "test") -> dict:
    """Held-out PSNR of predictions and of the noisy baseline, per pair."""
    dataset = PairedDataset.from_manifest(manifest, split=split)
    rows = []
    for i in range(len(dataset)):
        noisy, clean, rec = dataset[i]
        pred = infer(model, noisy)
        rows.append(
            {
                "id": rec["id"],
                "psnr_pred": psnr(torch.from_numpy(pred), torch.from_numpy(clean)),
                "psnr_noisy": psnr(torch.from_numpy(noisy), torch.from_numpy(clean)),
            }
        )
    mean = lambda key: float(np.mean([r[key] for r in rows]))
    return {"pairs": rows, "psnr_pred": mean("psnr_pred"), "psnr_noisy": mean("psnr_noisy")}


def save_checkpoint(result: TrainResult, path) -> Path:
    path = Path(path)
    torch.save(
        {"state_dict": result.model.state_dict(), "loss_curve": result.loss_curve},
        path,
    )
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(result.config.to_dict(), indent=2, sort_keys=True))
    return path


def load_checkpoint(path) -> TrainResult:
    path = Path(path)
    config = TrainConfig.from_dict(
        json.loads(path.with_suffix(path.suffix + ".json").read_text())
    )
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_model(config.architecture, seed=config.seed)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return TrainResult(model=model, loss_curve=payload["loss_curve"], config=config)
