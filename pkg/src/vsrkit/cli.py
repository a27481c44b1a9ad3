"""Command-line interface wiring the engine into user workflows.

Subcommands: upscale, evaluate, degrade, bench, score, fuse,
init-weights. Errors are written to stderr with the failing stage named
and yield a nonzero exit code; report files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager

import numpy as np

from . import dataio, metrics, models, reparam, scoring
from .dataio import ClipSequence


class CliError(RuntimeError):
    pass


@contextmanager
def _stage(name: str):
    try:
        yield
    except CliError:
        raise
    except Exception as exc:
        raise CliError(f"{name}: {exc}") from exc


def _write_json(path, payload: dict) -> None:
    dataio._atomic_write(path, (json.dumps(payload, indent=2) + "\n").encode())


def _load_model(arch: str, weights_path, seed: int, threads: int,
                fuse: bool = False) -> models.Model:
    spec = models.get_spec(arch)
    if weights_path is not None:
        with _stage("loading weights"):
            weights = dataio.load_weights(weights_path)
    elif not spec.convs:
        weights = {}
    else:
        weights = models.init_weights(spec, seed)
    if fuse:
        with _stage("fusing weights"):
            weights = reparam.fuse_store(weights)
    with _stage("building model"):
        return models.Model(spec, weights, threads=threads)


def cmd_upscale(args) -> int:
    model = _load_model(args.arch, args.weights, args.seed, args.threads, fuse=args.fuse)
    with _stage("loading input clip"):
        clip = dataio.load_clip(args.input)
    window = model.spec.frames_per_clip
    out_frames: list[np.ndarray] = []
    with _stage("inference"):
        for start in range(0, len(clip), window):
            frames = clip.frames[start:start + window]
            pad = window - len(frames)
            frames = frames + [frames[-1]] * pad
            packed = dataio.make_clip_tensor(frames)
            result = model.forward(packed)
            out_frames.extend(dataio.split_clip_tensor(result)[:window - pad])
    with _stage("writing output"):
        dataio.save_clip(ClipSequence(out_frames, name=clip.name, fps=clip.fps), args.output)
    return 0


def _clip_pairs(pred_dir, ref_dir):
    subdirs = sorted(d for d in os.listdir(pred_dir)
                     if os.path.isdir(os.path.join(pred_dir, d)))
    if not subdirs:
        yield os.path.basename(os.path.normpath(pred_dir)), pred_dir, ref_dir
        return
    for d in subdirs:
        ref = os.path.join(ref_dir, d)
        if not os.path.isdir(ref):
            raise CliError(f"evaluating: reference clip directory missing for {d!r}")
        yield d, os.path.join(pred_dir, d), ref


def cmd_evaluate(args) -> int:
    reports = []
    for name, pred_dir, ref_dir in _clip_pairs(args.pred, args.ref):
        with _stage(f"loading clip {name!r}"):
            pred = dataio.load_clip(pred_dir)
            ref = dataio.load_clip(ref_dir)
        with _stage(f"evaluating clip {name!r}"):
            reports.append(metrics.evaluate_clip(pred, ref, name=name))
    report = metrics.build_report(reports)
    with _stage("writing report"):
        _write_json(args.report, report.to_dict())
    return 0


def cmd_degrade(args) -> int:
    with _stage("loading input clip"):
        clip = dataio.load_clip(args.input)
    with _stage("degrading"):
        small = dataio.degrade_clip(clip, scale=args.scale)
    with _stage("writing output"):
        dataio.save_clip(small, args.output)
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args.arch, args.weights, args.seed, args.threads)
    with _stage("benchmarking"):
        report = scoring.benchmark(model, warmup=args.warmup, runs=args.runs,
                                   threads=args.threads, seed=args.seed)
    if args.report:
        with _stage("writing report"):
            _write_json(args.report, report.to_dict())
    else:
        print(f"{report.arch}: median {report.median_ms:.1f} ms, "
              f"mean {report.mean_ms:.1f} ms, p90 {report.p90_ms:.1f} ms "
              f"({report.runs} runs, {report.threads} threads)")
    return 0


def cmd_score(args) -> int:
    with _stage("scoring"):
        anchor = args.anchor or scoring.DEFAULT_ANCHOR
        params = scoring.fit_score_params(*anchor)
        value = scoring.final_score(args.psnr, args.runtime_ms, params)
    print(f"{value:.4f}")
    return 0


def cmd_fuse(args) -> int:
    with _stage("loading weights"):
        weights = dataio.load_weights(args.input)
    with _stage("fusing"):
        fused = reparam.fuse_store(weights)
    with _stage("writing weights"):
        dataio.save_weights(fused, args.output)
    return 0


def cmd_init_weights(args) -> int:
    spec = models.get_spec(args.arch)
    with _stage("initializing weights"):
        weights = models.init_weights(spec, args.seed)
        if args.acnet:
            weights = reparam.expand_store(weights, args.seed)
    with _stage("writing weights"):
        dataio.save_weights(weights, args.output)
    return 0


def _anchor(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("anchor must be 'psnr,runtime_ms,score'")
    return tuple(float(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsrkit",
                                     description="Video super-resolution inference, "
                                                 "evaluation and benchmarking")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights_required=False):
        p.add_argument("--arch", required=True, choices=models.ARCH_NAMES)
        p.add_argument("--weights", required=weights_required,
                       help="weight container path (default: seeded random weights)")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("upscale", help="run a model over a frame directory")
    common(p)
    p.add_argument("--input", required=True, help="low-resolution frame directory")
    p.add_argument("--output", required=True, help="output frame directory")
    p.add_argument("--fuse", action="store_true",
                   help="fuse asymmetric branch groups before inference")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report for prediction vs reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--report", required=True, help="output JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("degrade", help="bicubic antialiased downscale of a clip")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--scale", type=int, default=4)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("bench", help="latency benchmark at the contract input size")
    common(p)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--report", help="output JSON path (default: print summary)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", help="final score from PSNR and runtime")
    p.add_argument("--psnr", type=float, required=True)
    p.add_argument("--runtime-ms", type=float, required=True)
    p.add_argument("--anchor", type=_anchor,
                   help="psnr,runtime_ms,score row used to fit the normalization")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fuse", help="fuse branch groups inside a weight container")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("init-weights", help="write seeded random weights")
    p.add_argument("--arch", required=True, choices=models.ARCH_NAMES)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--output", required=True)
    p.add_argument("--acnet", action="store_true",
                   help="store 3x3 layers as asymmetric branch groups")
    p.set_defaults(func=cmd_init_weights)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
