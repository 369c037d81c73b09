"""Command line interface: train, infer, eval.

Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dataio import load_image, max_normalize, save_image
from .losses import Loss
from .models import Architecture
from .train import TrainConfig, evaluate_model, infer, load_checkpoint, save_checkpoint, train


def _cmd_train(args) -> int:
    if args.config:
        with open(args.config) as fh:
            config = TrainConfig.from_dict(json.load(fh))
    else:
        config = TrainConfig(
            manifest=args.manifest,
            architecture=Architecture(args.architecture),
            loss=Loss(args.loss),
            learning_rate=args.learning_rate,
            steps=args.steps,
            batch_size=args.batch_size,
            crop_size=args.crop_size,
            seed=args.seed,
        )
    result = train(config)
    save_checkpoint(result, args.out)
    print(
        f"trained {config.architecture.value}/{config.loss.value} for {config.steps} steps: "
        f"loss {result.loss_curve[0]:.4g} -> {result.loss_curve[-1]:.4g}; wrote {args.out}"
    )
    return 0


def _cmd_infer(args) -> int:
    result = load_checkpoint(args.checkpoint)
    image, meta = load_image(args.input)
    pred = infer(result.model, max_normalize(image))
    save_image(
        args.out,
        pred,
        {
            "kind_tag": "denoised_nanoscopy_image",
            "source": str(args.input),
            "checkpoint": str(args.checkpoint),
            "pixel_size_nm": meta.get("pixel_size_nm"),
        },
    )
    print(f"wrote denoised image to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    result = load_checkpoint(args.checkpoint)
    report = evaluate_model(result.model, args.manifest, split=args.split)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote report to {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanodenoise", description="Nanoscopy artefact-removal denoiser"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a denoiser on a paired dataset")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--config", default=None, help="TrainConfig JSON (overrides flags)")
    p.add_argument("--architecture", choices=[a.value for a in Architecture], default="unet_r34")
    p.add_argument("--loss", choices=[l.value for l in Loss], default="l1")
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--crop-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="denoise one image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="held-out PSNR vs the noisy baseline")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train" and not args.config and not args.manifest:
        print("error: --manifest or --config is required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
