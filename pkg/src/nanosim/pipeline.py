"""Dataset orchestration: paired noisy/clean nanoscopy sample generation.

One sample pair runs the chain scene -> blink trace -> noise-free raw
stack, branches into {identity, noise engine}, reconstructs both branches
with identical MUSICAL parameters, and persists the pair with complete
generation metadata. Pair seeds are derived from (master seed, structure,
index) so regeneration of any single pair is bit-identical regardless of
generation order or worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import metrics as qm
from .geometry import SceneBounds, StructureKind, StructureSpec, generate_scene
from .imaging import ImageGeometry, ImageStack, render_stack
from .musical import MusicalParams, reconstruct
from .noise import NoiseSpec, apply_poisson_camera
from .optics import OpticsParams, build_psf
from .photokinetics import KineticsParams, simulate_trace
from . import stackio

__all__ = [
    "DatasetConfig",
    "SamplePair",
    "generate_pair",
    "generate_dataset",
    "evaluate",
    "assign_pixel_size",
]

_KIND_CODE = {
    StructureKind.ACTIN_FILAMENT: 1,
    StructureKind.MITOCHONDRION: 2,
    StructureKind.VESICLE: 3,
}


@dataclass(frozen=True)
class DatasetConfig:
    """Desk-scale defaults; counts and sizes scale up by configuration only."""

    pairs_per_structure: int = 24
    frames: int = 200
    image_size: int = 64
    split_fraction: float = 0.75
    snr: float = 3.0
    background: float = 100.0
    pixel_sizes_nm: tuple[float, ...] = (65.0, 80.0, 108.0, 120.0)
    na_range: tuple[float, float] = (1.2, 1.49)
    wavelength_nm: float = 660.0
    tau_on_range: tuple[int, int] = (1, 5)
    tau_off_range: tuple[int, int] = (1, 20)
    alpha: float = 4.0
    subpixels: int = 10
    master_seed: int = 0
    save_raw_stacks: bool = True
    structures: tuple[str, ...] = ("actin", "mitochondria", "vesicles")

    def __post_init__(self):
        if self.pairs_per_structure < 1:
            raise ValueError("need at least one pair per structure")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if self.snr <= 1:
            raise ValueError("snr must exceed 1")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "DatasetConfig":
        with open(path) as fh:
            raw = json.load(fh)
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - fields
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("pixel_sizes_nm", "na_range", "tau_on_range", "tau_off_range", "structures"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass
class SamplePair:
    pair_id: str
    kind: StructureKind
    clean_nanoscopy: np.ndarray
    noisy_nanoscopy: np.ndarray
    metadata: dict
    clean_stack: ImageStack | None = None
    noisy_stack: ImageStack | None = None


def assign_pixel_size(index: int, count: int, sizes: tuple[float, ...]) -> float:
    """Quarter policy: equal contiguous blocks when count divides evenly,
    round-robin otherwise."""
    n = len(sizes)
    if count % n == 0:
        return sizes[index // (count // n)]
    return sizes[index % n]


def _pair_seed_sequence(config: DatasetConfig, kind: StructureKind, index: int):
    return np.random.SeedSequence((config.master_seed, _KIND_CODE[kind], index))


def pair_id(kind: StructureKind, index: int) -> str:
    return f"{kind.value}_{index:04d}"


def generate_pair(
    kind: StructureKind,
    config: DatasetConfig,
    index: int = 0,
    out_dir: Path | None = None,
) -> SamplePair:
    """Generate (and optionally persist) one noisy/clean nanoscopy pair."""
    ss = _pair_seed_sequence(config, kind, index)
    scene_ss, kin_ss, noise_ss, par_ss = ss.spawn(4)
    par_rng = np.random.default_rng(par_ss)

    na = float(par_rng.uniform(*config.na_range))
    tau_on = int(par_rng.integers(config.tau_on_range[0], config.tau_on_range[1] + 1))
    tau_off = int(par_rng.integers(config.tau_off_range[0], config.tau_off_range[1] + 1))
    pixel_size = assign_pixel_size(index, config.pairs_per_structure, config.pixel_sizes_nm)

    optics = OpticsParams(na=na, wavelength_nm=config.wavelength_nm, pixel_size_nm=pixel_size)
    psf = build_psf(optics)
    spec = StructureSpec.default(kind)
    bounds = SceneBounds()
    try:
        emitters = generate_scene(spec, bounds, np.random.default_rng(scene_ss))
        kinetics = KineticsParams(tau_on=tau_on, tau_off=tau_off)
        trace = simulate_trace(
            max(len(emitters), 1), config.frames, kinetics, np.random.default_rng(kin_ss)
        )
        if len(emitters) == 0:
            raise RuntimeError("scene produced no emitters")
        geometry = ImageGeometry(width=config.image_size, height=config.image_size)
        clean = render_stack(emitters, trace, psf, geometry, normalize=True, dtype=np.float32)
        noisy = apply_poisson_camera(
            clean, config.snr, config.background, np.random.default_rng(noise_ss)
        )
        mus = MusicalParams(optics=optics, alpha=config.alpha, subpixels=config.subpixels)
        nano_clean = reconstruct(clean, mus, psf)
        nano_noisy = reconstruct(noisy, mus, psf)
    except Exception as exc:
        raise RuntimeError(f"pair {pair_id(kind, index)}: {exc}") from exc

    pid = pair_id(kind, index)
    meta = {
        "id": pid,
        "kind": kind.value,
        "index": index,
        "na": na,
        "wavelength_nm": config.wavelength_nm,
        "pixel_size_nm": pixel_size,
        "tau_on": tau_on,
        "tau_off": tau_off,
        "frames": config.frames,
        "image_size": config.image_size,
        "snr": config.snr,
        "background": config.background,
        "n_emitters": len(emitters),
        "musical": nano_clean.params.metadata(),
        "master_seed": config.master_seed,
        "noise": NoiseSpec(snr=config.snr, background=config.background).metadata(),
    }
    pair = SamplePair(
        pair_id=pid,
        kind=kind,
        clean_nanoscopy=nano_clean.pixels,
        noisy_nanoscopy=nano_noisy.pixels,
        metadata=meta,
        clean_stack=clean,
        noisy_stack=noisy,
    )
    if out_dir is not None:
        _write_pair(pair, config, Path(out_dir))
    return pair


def _pair_paths(out_dir: Path, pid: str, save_raw: bool) -> dict:
    paths = {
        "clean_nanoscopy": out_dir / f"{pid}_clean_nano.raw",
        "noisy_nanoscopy": out_dir / f"{pid}_noisy_nano.raw",
    }
    if save_raw:
        paths["clean_stack"] = out_dir / f"{pid}_clean_stack.raw"
        paths["noisy_stack"] = out_dir / f"{pid}_noisy_stack.raw"
    return paths


# Storage is float32; capped indicator values exceed its range and would
# round to inf, so persisted nanoscopy images are clamped to this ceiling.
_SAVE_CEILING = float(np.finfo(np.float32).max)


def _write_pair(pair: SamplePair, config: DatasetConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _pair_paths(out_dir, pair.pair_id, config.save_raw_stacks)
    nano_meta = dict(pair.metadata)
    nano_meta["kind_tag"] = "nanoscopy_image"
    clean_nano = np.minimum(pair.clean_nanoscopy, _SAVE_CEILING)
    noisy_nano = np.minimum(pair.noisy_nanoscopy, _SAVE_CEILING)
    stackio.save_image(paths["clean_nanoscopy"], clean_nano, {**nano_meta, "branch": "clean"})
    stackio.save_image(paths["noisy_nanoscopy"], noisy_nano, {**nano_meta, "branch": "noisy"})
    if config.save_raw_stacks:
        stackio.save_stack(paths["clean_stack"], pair.clean_stack, {**pair.metadata, "branch": "clean"})
        stackio.save_stack(paths["noisy_stack"], pair.noisy_stack, {**pair.metadata, "branch": "noisy"})
    return {k: str(v) for k, v in paths.items()}


def _pair_complete(out_dir: Path, pid: str, save_raw: bool) -> bool:
    for p in _pair_paths(out_dir, pid, save_raw).values():
        if not p.exists() or not stackio.sidecar_path(p).exists():
            return False
    return True


def _generate_task(args) -> dict:
    kind_value, config, index, out_dir = args
    kind = StructureKind(kind_value)
    pid = pair_id(kind, index)
    out_dir = Path(out_dir)
    if _pair_complete(out_dir, pid, config.save_raw_stacks):
        _, meta = stackio.load_array(out_dir / f"{pid}_clean_nano.raw")
        record = {k: meta[k] for k in meta if k not in ("format_version", "shape", "dtype", "byteorder", "order", "kind", "branch", "kind_tag")}
        record["id"] = pid
        record["kind"] = kind.value
    else:
        pair = generate_pair(kind, config, index, out_dir)
        record = dict(pair.metadata)
    record["paths"] = {
        k: str(v) for k, v in _pair_paths(out_dir, pid, config.save_raw_stacks).items()
    }
    return record


def generate_dataset(config: DatasetConfig, out_dir, workers: int = 1) -> dict:
    """Generate all pairs, assign the train/test split, write the manifest.

    Already-complete pairs (all files present) are skipped, so generation
    is resumable; regenerated pairs are bit-identical by seed derivation.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (kind_value, config, index, str(out_dir))
        for kind_value in config.structures
        for index in range(config.pairs_per_structure)
    ]
    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            records = pool.map(_generate_task, tasks)
    else:
        records = [_generate_task(t) for t in tasks]

    # Seed-determined random split, exact per-structure counts.
    split_rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, 777)))
    by_kind: dict[str, list[dict]] = {}
    for rec in records:
        by_kind.setdefault(rec["kind"], []).append(rec)
    for kind_value, recs in by_kind.items():
        n_train = round(config.split_fraction * len(recs))
        order = split_rng.permutation(len(recs))
        for rank, idx in enumerate(order):
            recs[idx]["split"] = "train" if rank < n_train else "test"

    manifest = {
        "config": dataclasses.asdict(config),
        "pairs": records,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    manifest["manifest_path"] = str(manifest_path)
    return manifest


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def evaluate(
    pred_dir,
    manifest_path,
    split: str | None = "test",
    use_noisy_baseline: bool = False,
) -> dict:
    """Per-pair PSNR/SSIM/MS-SSIM against clean references, per-kind means.

    Predictions are {pair id}.raw files in pred_dir; with
    use_noisy_baseline=True the stored noisy nanoscopy images are scored
    instead (the no-denoiser baseline row).
    """
    manifest = load_manifest(manifest_path)
    pred_dir = Path(pred_dir) if pred_dir is not None else None
    rows = []
    for rec in manifest["pairs"]:
        if split is not None and rec.get("split") != split:
            continue
        ref, _ = stackio.load_image(rec["paths"]["clean_nanoscopy"])
        if use_noisy_baseline:
            cand, _ = stackio.load_image(rec["paths"]["noisy_nanoscopy"])
        else:
            pred_path = pred_dir / f"{rec['id']}.raw"
            if not pred_path.exists():
                raise FileNotFoundError(f"missing prediction for pair {rec['id']}: {pred_path}")
            cand, _ = stackio.load_image(pred_path)
        pair = qm.ImagePair(qm.max_normalize(cand), qm.max_normalize(ref))
        row = {"id": rec["id"], "kind": rec["kind"], **qm.all_metrics(pair)}
        rows.append(row)
    if not rows:
        raise ValueError("no pairs matched the requested split")

    def _mean(values):
        return float(np.mean(values)) if not any(math.isinf(v) for v in values) else math.inf

    summary = {}
    for kind_value in sorted({r["kind"] for r in rows}):
        sel = [r for r in rows if r["kind"] == kind_value]
        summary[kind_value] = {
            "count": len(sel),
            "psnr_db": _mean([r["psnr_db"] for r in sel]),
            "ssim": _mean([r["ssim"] for r in sel]),
            "ms_ssim": _mean([r["ms_ssim"] for r in sel]),
            "l1": _mean([r["l1"] for r in sel]),
            "l2": _mean([r["l2"] for r in sel]),
        }
    return {"pairs": rows, "summary": summary}
