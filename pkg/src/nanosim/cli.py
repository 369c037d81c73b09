"""Command line interface.

Subcommands: simulate, noise, musical, dataset, metrics, evaluate.
Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as qm
from . import pipeline, stackio
from .geometry import SceneBounds, StructureKind, StructureSpec, generate_scene
from .imaging import ImageGeometry, render_stack
from .musical import MusicalParams, reconstruct
from .noise import NoiseModel, NoiseSpec, apply_noise, measure_sbr
from .optics import OpticsParams, build_psf
from .photokinetics import KineticsParams, simulate_trace


def _add_optics_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--na", type=float, default=1.49, help="numerical aperture")
    p.add_argument("--wavelength", type=float, default=660.0, help="emission wavelength, nm")
    p.add_argument("--pixel-size", type=float, default=65.0, help="camera pixel size, nm")


def _optics_from(args) -> OpticsParams:
    return OpticsParams(na=args.na, wavelength_nm=args.wavelength, pixel_size_nm=args.pixel_size)


def _cmd_simulate(args) -> int:
    kind = StructureKind(args.structure)
    optics = _optics_from(args)
    psf = build_psf(optics)
    rng = np.random.default_rng(args.seed)
    spec = StructureSpec.default(kind)
    emitters = generate_scene(spec, SceneBounds(), rng)
    kinetics = KineticsParams(tau_on=args.tau_on, tau_off=args.tau_off)
    trace = simulate_trace(len(emitters), args.frames, kinetics, rng)
    geometry = ImageGeometry(width=args.size, height=args.size)
    stack = render_stack(emitters, trace, psf, geometry, normalize=True, dtype=np.float32)
    stackio.save_stack(
        args.out,
        stack,
        {
            "structure": kind.value,
            "tau_on": args.tau_on,
            "tau_off": args.tau_off,
            "n_emitters": len(emitters),
            "seed": args.seed,
        },
    )
    if args.emitters_out:
        emitters.to_table(args.emitters_out)
    print(f"wrote {args.frames}-frame clean stack ({len(emitters)} emitters) to {args.out}")
    return 0


def _cmd_noise(args) -> int:
    stack = stackio.load_stack(args.input)
    model = NoiseModel(args.model)
    spec = NoiseSpec(
        model=model, snr=args.snr, background=args.background, variance=args.variance, seed=args.seed
    )
    noisy = apply_noise(stack, spec)
    stackio.save_stack(args.out, noisy, {"noise": spec.metadata()})
    print(f"applied {model.value} noise; measured SBR {measure_sbr(noisy):.3f}; wrote {args.out}")
    return 0


def _cmd_musical(args) -> int:
    stack = stackio.load_stack(args.input)
    if stack.optics is None:
        if args.na is None:
            raise ValueError("stack sidecar lacks optics metadata; pass --na/--wavelength")
        optics = OpticsParams(
            na=args.na, wavelength_nm=args.wavelength, pixel_size_nm=stack.pixel_size_nm
        )
    else:
        optics = stack.optics
    params = MusicalParams(
        optics=optics,
        alpha=args.alpha,
        subpixels=args.subpixels,
        window_size=args.window,
        threshold=args.threshold,
    )
    image = reconstruct(stack, params)
    stackio.save_image(
        args.out,
        image.pixels,
        {
            "kind_tag": "nanoscopy_image",
            "pixel_size_nm": image.pixel_size_nm,
            "subpixels": image.subpixels,
            "musical": image.params.metadata(),
            "capped_points": image.capped_points,
            "source": str(args.input),
        },
    )
    print(f"wrote {image.pixels.shape[0]}x{image.pixels.shape[1]} nanoscopy image to {args.out}")
    return 0


def _cmd_dataset(args) -> int:
    config = (
        pipeline.DatasetConfig.from_json(args.config)
        if args.config
        else pipeline.DatasetConfig()
    )
    if args.seed is not None:
        import dataclasses

        config = dataclasses.replace(config, master_seed=args.seed)
    manifest = pipeline.generate_dataset(config, args.out, workers=args.workers)
    print(f"generated {len(manifest['pairs'])} pairs; manifest at {manifest['manifest_path']}")
    return 0


def _cmd_metrics(args) -> int:
    cand, _ = stackio.load_image(args.candidate)
    ref, _ = stackio.load_image(args.reference)
    pair = qm.ImagePair(qm.max_normalize(cand), qm.max_normalize(ref))
    table = qm.all_metrics(pair)
    if args.json:
        print(json.dumps(table, indent=2))
    else:
        for key, value in table.items():
            print(f"{key:>16}: {value}")
    return 0


def _cmd_evaluate(args) -> int:
    report = pipeline.evaluate(
        args.pred,
        args.manifest,
        split=None if args.split == "all" else args.split,
        use_noisy_baseline=args.noisy_baseline,
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanosim",
        description="Simulation-supervised nanoscopy data engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a scene and render a clean raw stack")
    p.add_argument("--structure", choices=[k.value for k in StructureKind], required=True)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--size", type=int, default=64, help="image width/height, pixels")
    p.add_argument("--tau-on", type=float, default=1.0)
    p.add_argument("--tau-off", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emitters-out", default=None, help="optional emitter table path")
    p.add_argument("--out", required=True)
    _add_optics_args(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("noise", help="apply a noise model to a stack")
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=[m.value for m in NoiseModel], default="poisson")
    p.add_argument("--snr", type=float, default=3.0)
    p.add_argument("--background", type=float, default=100.0)
    p.add_argument("--variance", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("musical", help="reconstruct a nanoscopy image from a stack")
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--subpixels", type=int, default=10)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None, help="fixed singular-value threshold (default: automatic)")
    p.add_argument("--na", type=float, default=None)
    p.add_argument("--wavelength", type=float, default=660.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_musical)

    p = sub.add_parser("dataset", help="generate a paired training dataset")
    p.add_argument("--config", default=None, help="DatasetConfig JSON path")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("metrics", help="compare two images")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("evaluate", help="score predictions against a dataset manifest")
    p.add_argument("--pred", default=None, help="directory of {pair id}.raw predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--noisy-baseline", action="store_true", help="score the stored noisy images instead of predictions")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
