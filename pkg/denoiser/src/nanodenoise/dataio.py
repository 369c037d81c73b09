"""Reader/writer for the simulator's raw-float32 + JSON-sidecar image format
and a paired-dataset view over its manifest.

The format is deliberately reimplemented here from its on-disk contract
(headerless little-endian float32, C order, shape in the sidecar) so this
package depends only on the files the simulator emits, not on its code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "load_image",
    "save_image",
    "load_manifest",
    "PairedDataset",
    "max_normalize",
]

FORMAT_VERSION = 1


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(p.suffix + ".json")


def load_image(path) -> tuple[np.ndarray, dict]:
    """2D image and its sidecar metadata."""
    path = Path(path)
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {meta.get('format_version')}")
    arr = np.fromfile(path, dtype="<f4").reshape(meta["shape"])
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a 2D image, got shape {arr.shape}")
    return arr.astype(np.float64), meta


def save_image(path, image: np.ndarray, metadata: dict | None = None) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(image, dtype="<f4")
    meta = {
        "format_version": FORMAT_VERSION,
        "shape": list(arr.shape),
        "dtype": "float32",
        "byteorder": "little",
        "order": "C",
        "kind": "image",
    }
    if metadata:
        meta.update(metadata)
    arr.tofile(path)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if "pairs" not in manifest:
        raise ValueError(f"{path}: not a dataset manifest (missing 'pairs')")
    return manifest


def max_normalize(image: np.ndarray) -> np.ndarray:
    peak = image.max()
    return image / peak if peak > 0 else image.copy()


@dataclass
class PairedDataset:
    """Noisy/clean nanoscopy image pairs from a dataset manifest.

    Images are max-normalized on load; `split` filters on the manifest's
    train/test assignment (None keeps everything).
    """

    records: list

    @classmethod
    def from_manifest(cls, manifest_path, split: str | None = "train") -> "PairedDataset":
        manifest = load_manifest(manifest_path)
        records = [
            rec
            for rec in manifest["pairs"]
            if split is None or rec.get("split") == split
        ]
        if not records:
            raise ValueError(f"no pairs in split {split!r} of {manifest_path}")
        return cls(records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray, dict]:
        rec = self.records[i]
        noisy, _ = load_image(rec["paths"]["noisy_nanoscopy"])
        clean, _ = load_image(rec["paths"]["clean_nanoscopy"])
        return max_normalize(noisy), max_normalize(clean), rec
