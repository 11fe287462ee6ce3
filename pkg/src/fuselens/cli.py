"""Batch command line: train, sweep, guidance precompute, bench, serve.

Every command is deterministic under --seed. Report-producing commands
write figures next to their delimited output. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import figures
from .checkpoint import CheckpointError, load_checkpoint
from .data import ImageFormatError, ImagePair, SyntheticSpec, load_pairs, synth_pairs
from .losses import LossConfig
from .models import MODEL_NAMES, FusionModel, build_model, fuse_images
from .saliency import (
    ForwardPass,
    display_normalize_pair,
    gamma_correct,
    guidance_pair,
    guidance_rgb,
    scatter_csv,
    scatter_data,
)
from .training import (
    TrainRunConfig,
    TrainingDivergedError,
    best_balance,
    sweep,
    sweep_csv,
    train,
    write_loss_csv,
)

TRAINABLE = tuple(n for n in MODEL_NAMES if n != "WeightedAveraging")


# ------------------------------------------------------------------ arg groups

def _add_loss_flags(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lambda_weight", type=float, default=0.99,
                   help="weight of the SSIM term in the total loss")
    p.add_argument("--gamma-ssim", type=float, default=0.5,
                   help="share of the SSIM term assigned to the first input")
    p.add_argument("--gamma-l2", type=float, default=0.5,
                   help="share of the l2 term assigned to the first input")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--learning-rate", type=float, default=2e-3)


def _add_data_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", metavar="DIR",
                   help="directory holding manifest.txt; omit for synthetic pairs")
    p.add_argument("--pairs", type=int, default=8,
                   help="synthetic pair count when --data is omitted")
    p.add_argument("--resolution", type=int, default=64,
                   help="synthetic image side length")


def _add_seed(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)


def _add_model_source(p: argparse.ArgumentParser):
    p.add_argument("--checkpoint", metavar="PATH", help="trained model weights")
    p.add_argument("--model", choices=MODEL_NAMES,
                   help="freshly initialized model instead of a checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselens",
        description="Train fusion models and inspect their per-pixel gradients.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model, write checkpoint + loss curves")
    p.add_argument("--model", choices=TRAINABLE, required=True)
    _add_run_flags(p)
    _add_loss_flags(p)
    _add_data_flags(p)
    _add_seed(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("sweep", help="train a grid of loss configurations")
    p.add_argument("--model", choices=TRAINABLE, required=True)
    p.add_argument("--lambdas", default="0.99",
                   help="comma-separated lambda values")
    p.add_argument("--gamma-ssims", default="0.5",
                   help="comma-separated gamma-ssim values")
    p.add_argument("--gamma-l2", type=float, default=0.5)
    _add_run_flags(p)
    _add_data_flags(p)
    _add_seed(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("guidance",
                       help="precompute guidance images, scatter data, figures")
    _add_model_source(p)
    _add_data_flags(p)
    p.add_argument("--pair", metavar="ID", help="pair id from the manifest")
    p.add_argument("--pixel", type=int,
                   help="principle pixel for the scatter output (default center)")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="display gamma for the exported images")
    p.add_argument("--block", type=int, default=64,
                   help="pixels per backward pass")
    _add_seed(p)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("bench", help="hover latency over random principle pixels")
    _add_model_source(p)
    _add_data_flags(p)
    p.add_argument("--pair", metavar="ID")
    p.add_argument("--hovers", type=int, default=100)
    _add_seed(p)
    p.add_argument("--out", metavar="DIR", help="also write bench.csv and a histogram")

    p = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p.add_argument("--config", metavar="TOML")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--data", metavar="DIR")

    return parser


# -------------------------------------------------------------------- loading

def _load_pairs(parser: argparse.ArgumentParser, args) -> list[ImagePair]:
    if args.data is not None:
        manifest = Path(args.data) / "manifest.txt"
        if not manifest.exists():
            parser.error(f"no manifest.txt under --data {args.data}")
        try:
            return load_pairs(manifest)
        except (ImageFormatError, OSError, ValueError) as e:
            parser.error(f"could not load --data {args.data}: {e}")
    try:
        spec = SyntheticSpec(resolution=args.resolution, rng_seed=args.seed)
    except ValueError as e:
        parser.error(str(e))
    return synth_pairs(spec, args.pairs)


def _pick_pair(parser: argparse.ArgumentParser, args,
               pairs: list[ImagePair]) -> ImagePair:
    if args.pair is None:
        return pairs[0]
    for pair in pairs:
        if pair.id == args.pair:
            return pair
    parser.error(f"unknown pair {args.pair!r}; have {', '.join(p.id for p in pairs)}")


def _loss_config(parser: argparse.ArgumentParser, args,
                 lambda_weight=None, gamma_ssim=None) -> LossConfig:
    try:
        return LossConfig(
            lambda_weight=args.lambda_weight if lambda_weight is None else lambda_weight,
            gamma_ssim=args.gamma_ssim if gamma_ssim is None else gamma_ssim,
            gamma_l2=args.gamma_l2)
    except ValueError as e:
        parser.error(str(e))


def _run_config(parser: argparse.ArgumentParser, args) -> TrainRunConfig:
    try:
        return TrainRunConfig(epochs=args.epochs, batch_size=args.batch_size,
                              learning_rate=args.learning_rate, rng_seed=args.seed)
    except ValueError as e:
        parser.error(str(e))


def _load_model(parser: argparse.ArgumentParser, args) -> FusionModel:
    if args.checkpoint and args.model:
        parser.error("give either --checkpoint or --model, not both")
    if args.checkpoint:
        path = Path(args.checkpoint)
        if not path.exists():
            parser.error(f"checkpoint not found: {path}")
        try:
            model, _ = load_checkpoint(path)
        except CheckpointError as e:
            parser.error(f"bad checkpoint {path}: {e}")
        return model
    if args.model:
        return build_model(args.model, seed=args.seed)
    parser.error("need --checkpoint or --model")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------- commands

def cmd_train(parser: argparse.ArgumentParser, args) -> int:
    loss_cfg = _loss_config(parser, args)
    run_cfg = _run_config(parser, args)
    pairs = _load_pairs(parser, args)
    dataset = [(p.x1, p.x2) for p in pairs]
    model = build_model(args.model, seed=args.seed)
    out = _out_dir(args)

    every = max(1, run_cfg.epochs // 10)

    def progress(epoch, report):
        if epoch % every == 0 or epoch == run_cfg.epochs:
            print(f"epoch {epoch}/{run_cfg.epochs}  l_total={report.l_total:.6f}  "
                  f"l_ssim_mri={report.l_ssim_mri:.6f}  "
                  f"l_ssim_pet={report.l_ssim_pet:.6f}")

    result = train(model, dataset, run_cfg, loss_cfg,
                   checkpoint_path=out / "model.ckpt", progress=progress)
    write_loss_csv(out / "loss.csv", result.history)
    figures.loss_curve_figure(result.history, out / "loss_curve.png")
    final = result.history[-1]
    print(f"done: {args.model} on {len(dataset)} pairs, "
          f"final l_total={final.l_total!r}")
    print(f"wrote {out / 'model.ckpt'}, {out / 'loss.csv'}, {out / 'loss_curve.png'}")
    return 0


def cmd_sweep(parser: argparse.ArgumentParser, args) -> int:
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
        gamma_ssims = [float(v) for v in args.gamma_ssims.split(",") if v.strip()]
    except ValueError:
        parser.error("--lambdas and --gamma-ssims take comma-separated numbers")
    if not lambdas or not gamma_ssims:
        parser.error("sweep grid is empty")
    grid = [_loss_config(parser, args, lambda_weight=lw, gamma_ssim=gs)
            for lw in lambdas for gs in gamma_ssims]
    run_cfg = _run_config(parser, args)
    pairs = _load_pairs(parser, args)
    dataset = [(p.x1, p.x2) for p in pairs]
    out = _out_dir(args)

    def progress(k, row):
        c = row.loss_cfg
        print(f"cell {k + 1}/{len(grid)}  lambda={c.lambda_weight}  "
              f"gamma_ssim={c.gamma_ssim}  balance={row.balance:.6f}")

    rows = sweep(args.model, grid, dataset, run_cfg, progress=progress)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    figures.sweep_figure(rows, out / "sweep.png")
    best = best_balance(rows)
    print(f"best cell {best.index}: lambda={best.loss_cfg.lambda_weight}  "
          f"gamma_ssim={best.loss_cfg.gamma_ssim}  balance={best.balance!r}")
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep.png'}")
    return 0


def _save_gray_png(path: Path, image: np.ndarray):
    from PIL import Image

    quant = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quant, mode="L").save(path)


def cmd_guidance(parser: argparse.ArgumentParser, args) -> int:
    model = _load_model(parser, args)
    pairs = _load_pairs(parser, args)
    pair = _pick_pair(parser, args, pairs)
    if not 0.1 <= args.gamma <= 2.0:
        parser.error(f"--gamma must be in [0.1, 2.0], got {args.gamma}")
    if args.block < 1:
        parser.error("--block must be >= 1")
    out = _out_dir(args)

    fp = ForwardPass(model, pair.x1, pair.x2)
    shape = fp.shape
    pixel = args.pixel
    if pixel is None:
        pixel = shape.to_index(shape.height // 2, shape.width // 2)
    else:
        shape.check_index(pixel)

    t0 = time.perf_counter()
    g1, g2 = guidance_pair(model, pair.x1, pair.x2, block_size=args.block)
    dt = time.perf_counter() - t0
    print(f"guidance: {shape.n} pixels in {dt:.2f}s "
          f"({dt / shape.n * 1000:.2f} ms/pixel)")

    n1, n2 = display_normalize_pair(g1.values, g2.values)
    _save_gray_png(out / "guidance_x1.png", gamma_correct(n1, args.gamma))
    _save_gray_png(out / "guidance_x2.png", gamma_correct(n2, args.gamma))
    rgb = guidance_rgb(g1, g2, fp.fused)

    from PIL import Image

    composite = np.stack([gamma_correct(rgb.red, args.gamma),
                          gamma_correct(rgb.green, args.gamma),
                          rgb.blue], axis=-1)
    Image.fromarray(np.round(composite * 255.0).astype(np.uint8),
                    mode="RGB").save(out / "guidance_rgb.png")

    data = scatter_data(g1, g2, pixel)
    (out / "scatter.csv").write_text(scatter_csv(data))
    figures.scatter_figure(data, out / "scatter.png")
    figures.guidance_report_figure(pair.x1, pair.x2, fp.fused,
                                   gamma_correct(n1, args.gamma),
                                   gamma_correct(n2, args.gamma),
                                   rgb, out / "guidance_report.png")

    # spot check: diagonal entries must match fresh per-pixel backwards
    rng = np.random.default_rng(args.seed)
    sample = rng.integers(1, shape.n + 1, size=min(5, shape.n))
    worst = 0.0
    for j in map(int, sample):
        j1, j2 = fp.jacobian_pair(j)
        r, c = shape.to_rc(j)
        worst = max(worst, abs(j1.values[r, c] - g1.values[r, c]),
                    abs(j2.values[r, c] - g2.values[r, c]))
    print(f"consistency spot check: {len(sample)} pixels, "
          f"max |diag - jacobian| = {worst:.3e}")
    if worst > 1e-9:
        print("consistency spot check FAILED", file=sys.stderr)
        return 1
    print(f"wrote guidance images, scatter.csv, figures under {out}")
    return 0


def cmd_bench(parser: argparse.ArgumentParser, args) -> int:
    model = _load_model(parser, args)
    pairs = _load_pairs(parser, args)
    pair = _pick_pair(parser, args, pairs)
    if args.hovers < 1:
        parser.error("--hovers must be >= 1")

    fp = ForwardPass(model, pair.x1, pair.x2)
    fp.jacobian_pair(1)  # warm-up excluded from timing
    rng = np.random.default_rng(args.seed)
    pixels = [int(v) for v in rng.integers(1, fp.shape.n + 1, size=args.hovers)]
    times = []
    for pixel in pixels:
        t0 = time.perf_counter()
        fp.jacobian_pair(pixel)
        times.append(time.perf_counter() - t0)

    mean = sum(times) / len(times)
    print(f"{model.name} {fp.shape.height}x{fp.shape.width}: "
          f"{args.hovers} hovers over randomly selected principle pixels")
    print(f"mean {mean:.4f} s/hover  median {statistics.median(times):.4f} s  "
          f"max {max(times):.4f} s")
    print(f"fps {1.0 / mean:.1f}")

    if args.out:
        out = _out_dir(args)
        lines = ["hover,pixel,seconds"]
        lines += [f"{i},{p},{t!r}" for i, (p, t) in enumerate(zip(pixels, times), 1)]
        (out / "bench.csv").write_text("\n".join(lines) + "\n")
        figures.bench_figure(times, out / "bench.png")
        print(f"wrote {out / 'bench.csv'}, {out / 'bench.png'}")
    return 0


def cmd_serve(parser: argparse.ArgumentParser, args) -> int:
    from .service import load_config, serve

    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as e:
        parser.error(f"bad config: {e}")
    overrides = {}
    if args.host is not None:
        overrides["host"] = args.host
    if args.port is not None:
        overrides["port"] = args.port
    if args.data is not None:
        overrides["data_dir"] = args.data
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    print(f"serving on {cfg.host}:{cfg.port}")
    serve(cfg)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = {
        "train": cmd_train,
        "sweep": cmd_sweep,
        "guidance": cmd_guidance,
        "bench": cmd_bench,
        "serve": cmd_serve,
    }[args.command]
    try:
        return command(parser, args)
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (CheckpointError, ImageFormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
