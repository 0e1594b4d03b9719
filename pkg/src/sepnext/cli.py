"""Command-line entry points: tag, eval, profile, train-toy.

Thread pinning must happen before numpy first loads, so this module imports
only the standard library at the top level and pulls the heavy modules
inside each command, after --threads / SEPNEXT_THREADS has been applied.

Exit codes: 0 success, 2 usage errors (unknown model, empty manifest,
malformed config), 3 checkpoint problems, 4 audio decode failures,
1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CHECKPOINT = 3
EXIT_AUDIO = 4

_THREAD_ENV_KEYS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        env = os.environ.get("SEPNEXT_THREADS")
        if not env:
            return
        threads = int(env)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    for key in _THREAD_ENV_KEYS:
        os.environ[key] = str(threads)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepnext",
        description="Audio tagging models: inference, evaluation, profiling.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="BLAS/OpenMP thread cap (default: SEPNEXT_THREADS or library default)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tag = sub.add_parser("tag", help="print top classes for wav files")
    tag.add_argument("--model", required=True)
    tag.add_argument("--checkpoint", required=True)
    tag.add_argument("--top", type=int, default=5)
    tag.add_argument("--classmap", default=None, help="CSV mapping index to display name")
    tag.add_argument("wavs", nargs="+")

    ev = sub.add_parser("eval", help="score a labeled manifest of wav files")
    ev.add_argument("--model", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", default=None, help="per-class metrics CSV path")

    prof = sub.add_parser("profile", help="report parameter and MAC counts")
    prof.add_argument("--model", required=True)
    prof.add_argument("--frames", type=int, default=None)
    prof.add_argument("--bench", action="store_true", help="also time a forward pass")
    prof.add_argument("--bench-batch", type=int, default=4)

    toy = sub.add_parser("train-toy", help="run the synthetic overfit check")
    toy.add_argument("--config", required=True, help="key=value training config file")
    toy.add_argument("--out", default="toy_run", help="output directory")

    return parser


def _load_model(name: str, checkpoint_path: str):
    from . import checkpoint
    from .models import build

    model = build(name)
    state = checkpoint.load(checkpoint_path)
    checkpoint.apply(model, state, strict=True)
    model.train(False)
    return model


def _scores_for_files(model, paths):
    import numpy as np

    from .frontend import load_wav, logmel, resample
    from .models import mel_config_for, prepare_input

    mel = mel_config_for(model.cfg)
    rows = []
    for p in paths:
        wave = load_wav(p)
        wave = resample(wave, mel.sample_rate)
        feats = logmel(wave, mel)
        x = prepare_input(model.cfg, feats)
        rows.append(model.predict(x).array[0])
    return np.stack(rows)


def _cmd_tag(args) -> int:
    from .evalkit import load_class_map

    names = load_class_map(args.classmap) if args.classmap else {}
    model = _load_model(args.model, args.checkpoint)
    scores = _scores_for_files(model, args.wavs)
    for path, row in zip(args.wavs, scores):
        print(path)
        top = row.argsort()[::-1][: max(args.top, 1)]
        for c in top:
            label = f" {names[c]}" if c in names else ""
            print(f"  class={int(c)} p={row[c]:.3f}{label}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .evalkit import evaluate, load_manifest

    model = _load_model(args.model, args.checkpoint)
    manifest = load_manifest(args.manifest, model.cfg.num_classes)
    if len(manifest) == 0:
        print(f"error: manifest {args.manifest} lists no files", file=sys.stderr)
        return EXIT_USAGE
    scores = _scores_for_files(model, manifest.paths)
    report = evaluate(scores, manifest.target_matrix(model.cfg.num_classes))
    for line in report.summary_lines():
        print(line)
    if args.out:
        report.write_csv(args.out)
        print(f"per_class_csv={args.out}")
    return EXIT_OK


def _cmd_profile(args) -> int:
    from .models import build
    from .profiler import bench_throughput, report_lines

    model = build(args.model)
    for line in report_lines(model, args.frames):
        print(line)
    if args.bench:
        stats = bench_throughput(model, batch=args.bench_batch, frames=args.frames)
        print(f"bench_batch={args.bench_batch}")
        print(f"bench_clips_per_sec={stats['clips_per_sec']:.3f}")
        print(f"bench_batch_seconds={stats['batch_seconds']:.4f}")
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    from .trainer import parse_train_config, train_toy

    cfg = parse_train_config(args.config)
    summary = train_toy(cfg, args.out)
    print(f"steps={summary['steps']}")
    print(f"final_loss={summary['final_loss']:.6f}")
    print(f"train_map={summary['train_map']:.6f}")
    print(f"history={summary['history_path']}")
    print(f"checkpoint={summary['checkpoint_path']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    from .errors import AudioDecodeError, CheckpointError, ConfigError, TrainDiverged

    handler = {
        "tag": _cmd_tag,
        "eval": _cmd_eval,
        "profile": _cmd_profile,
        "train-toy": _cmd_train_toy,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except AudioDecodeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_AUDIO
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
