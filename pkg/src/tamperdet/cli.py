"""Command-line interface: gen-data, train, infer, eval, robustness.

Exit codes: 0 success, 1 any per-item failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, net_from_checkpoint
from .data import (
    DatasetManifest,
    IngestError,
    generate_dataset,
    load_image,
    load_samples,
)
from .errors import ConfigurationError, InputError, TamperdetError
from .forge import KINDS
from .inference import predict_arrays
from .metrics import build_report, robustness_sweep, score_model, summarize_report, write_curve, write_report
from .trainer import TrainConfig, load_train_config, train_from_manifests


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tamperdet",
        description="Image manipulation detection toolkit: synthetic data, training, inference, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic forged dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=100, help="number of forged images")
    p.add_argument("--authentic", type=int, default=0, help="number of authentic images")
    p.add_argument("--size", type=int, default=128, help="image side length")
    p.add_argument("--kinds", default=",".join(KINDS), help="comma-separated manipulation kinds")
    p.add_argument("--split", default="train", help="split tag written to the manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-region", type=int, default=16)
    p.add_argument("--max-region", type=int, default=48)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--config", help="key=value config file; defaults apply when omitted")
    p.add_argument("--manifest", required=True, help="training manifest")
    p.add_argument("--val-manifest", help="validation manifest (best checkpoint by Com-F1)")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run inference on images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("images", nargs="+", help="input image paths")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for the report")
    p.add_argument("--mode", choices=("fixed", "optimal"), default="fixed")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="pixel-F1 sweep under JPEG or blur perturbation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for the curve file")
    p.add_argument("--perturb", choices=("jpeg", "blur"), default="jpeg")
    p.add_argument("--levels", default="100,90,70,50", help="comma-separated levels")
    p.set_defaults(func=cmd_robustness)

    return parser


def cmd_gen_data(args: argparse.Namespace) -> int:
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    manifest_path = generate_dataset(
        args.out,
        count=args.count,
        authentic_count=args.authentic,
        size=args.size,
        kinds=kinds,
        split=args.split,
        seed=args.seed,
        min_region=args.min_region,
        max_region=args.max_region,
    )
    print(f"wrote {args.count + args.authentic} images, manifest at {manifest_path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
        config.model.seed = args.seed
    config.validate()
    checkpoint = train_from_manifests(
        config,
        args.manifest,
        val_manifest=args.val_manifest,
        out_dir=args.out,
        resume_from=args.resume,
    )
    print(
        f"finished at step {checkpoint.step}; checkpoints in {args.out} "
        f"(best val Com-F1: {checkpoint.best_val_com_f1})"
    )
    return 0


def _load_net(checkpoint_path: str):
    checkpoint = load_checkpoint(checkpoint_path)
    net = net_from_checkpoint(checkpoint)
    return net, checkpoint.config["model"]["input_size"]


def cmd_infer(args: argparse.Namespace) -> int:
    net, size = _load_net(args.checkpoint)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    failures = 0
    for path in args.images:
        try:
            image = load_image(path)
            h, w = image.shape[:2]
            resized = (
                image
                if (h, w) == (size, size)
                else cv2.resize(image, (size, size), interpolation=cv2.INTER_LINEAR)
            )
            segs, _, scores = predict_arrays(net, resized[None])
            prob = segs[0]
            if (h, w) != (size, size):
                prob = cv2.resize(prob, (w, h), interpolation=cv2.INTER_LINEAR)
            stem = Path(path).stem
            prob_png = (np.clip(prob, 0.0, 1.0) * 255.0).round().astype(np.uint8)
            cv2.imwrite(str(out_dir / f"{stem}_prob.png"), prob_png)
            binary = ((prob >= args.threshold) * 255).astype(np.uint8)
            cv2.imwrite(str(out_dir / f"{stem}_mask.png"), binary)
            score = float(scores[0])
            decision = int(score >= args.threshold)
            records.append(f"{path},{score:.6f},{decision}")
            print(records[-1])
        except Exception as exc:  # noqa: BLE001 - per-file fault isolation
            failures += 1
            print(f"error: {path}: {exc}", file=sys.stderr)
    (out_dir / "predictions.csv").write_text(
        "\n".join(records) + ("\n" if records else "")
    )
    return 1 if failures else 0


def cmd_eval(args: argparse.Namespace) -> int:
    net, size = _load_net(args.checkpoint)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    errors: list[IngestError] = []
    samples = load_samples(DatasetManifest.load(args.manifest), size=size, error_sink=errors)
    for err in errors:
        print(f"warning: skipped {err.path}: {err.reason}", file=sys.stderr)
    scored = score_model(net, samples)
    report = build_report(scored, mode=args.mode, threshold=args.threshold)
    write_report(report, out_dir / "report.txt")
    print(summarize_report(report))
    return 1 if errors else 0


def cmd_robustness(args: argparse.Namespace) -> int:
    net, size = _load_net(args.checkpoint)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    levels = [float(level) for level in args.levels.split(",") if level.strip()]
    if not levels:
        raise ConfigurationError("--levels must list at least one level")
    samples = load_samples(DatasetManifest.load(args.manifest), size=size)
    curve = robustness_sweep(net, samples, kind=args.perturb, levels=levels)
    curve_path = out_dir / f"robustness_{args.perturb}.csv"
    write_curve(curve, curve_path)
    for level, value in curve:
        print(f"{args.perturb}={level:g} pixel_f1={value:.6f}")
    print(f"curve written to {curve_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TamperdetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
