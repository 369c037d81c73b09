"""Raw binary persistence for stacks and nanoscopy images.

Format: little-endian 32-bit floats, C order, no header. A JSON sidecar
(same path with .json appended to the stem) carries the shape, dtype,
acquisition metadata, and a format version, so any language can read the
files with a few lines of code.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .imaging import ImageStack
from .optics import optics_from_metadata, optics_metadata

__all__ = [
    "save_array",
    "load_array",
    "save_stack",
    "load_stack",
    "save_image",
    "load_image",
    "sidecar_path",
]

FORMAT_VERSION = 1


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_suffix(p.suffix + ".json") if p.suffix != ".json" else p


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_array(path, array: np.ndarray, metadata: dict | None = None) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f4")
    meta = {
        "format_version": FORMAT_VERSION,
        "shape": list(arr.shape),
        "dtype": "float32",
        "byteorder": "little",
        "order": "C",
    }
    if metadata:
        meta.update(metadata)
    _atomic_write(path, arr.tobytes())
    _atomic_write(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True).encode())
    return path


def load_array(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with open(sidecar_path(path)) as fh:
        meta = json.load(fh)
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {meta.get('format_version')}")
    arr = np.fromfile(path, dtype="<f4").reshape(meta["shape"])
    return arr, meta


def save_stack(path, stack: ImageStack, extra: dict | None = None) -> Path:
    meta = {"kind": "image_stack", "pixel_size_nm": stack.pixel_size_nm}
    if stack.optics is not None:
        meta["optics"] = optics_metadata(stack.optics)
    if extra:
        meta.update(extra)
    return save_array(path, stack.frames, meta)


def load_stack(path) -> ImageStack:
    arr, meta = load_array(path)
    optics = optics_from_metadata(meta["optics"]) if "optics" in meta else None
    pixel_size = meta.get("pixel_size_nm") or (optics.pixel_size_nm if optics else None)
    if pixel_size is None:
        raise ValueError(f"{path}: sidecar lacks pixel size metadata")
    return ImageStack(arr.astype(np.float64), pixel_size_nm=pixel_size, optics=optics)


def save_image(path, image: np.ndarray, metadata: dict | None = None) -> Path:
    meta = {"kind": "image"}
    if metadata:
        meta.update(metadata)
    return save_array(path, image, meta)


def load_image(path) -> tuple[np.ndarray, dict]:
    arr, meta = load_array(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a single 2D image, got shape {arr.shape}")
    return arr.astype(np.float64), meta
