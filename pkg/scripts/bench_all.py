#!/usr/bin/env python3
"""Cost and throughput table for every registered model.

Static columns (params, MACs) are cheap; wall-clock numbers build each model
and time real forward passes, so the full run takes a few minutes on the
larger configurations. Use --skip-bench for the static table only.
"""

from __future__ import annotations

import argparse

from sepnext.models import MODEL_CONFIGS, build
from sepnext.profiler import bench_throughput, count_macs, count_params


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=4, help="bench batch size")
    ap.add_argument("--repeats", type=int, default=3, help="timed repeats, best kept")
    ap.add_argument("--skip-bench", action="store_true", help="static columns only")
    ap.add_argument(
        "--models",
        nargs="*",
        default=list(MODEL_CONFIGS),
        choices=list(MODEL_CONFIGS),
        help="subset to run",
    )
    args = ap.parse_args()

    header = f"{'model':<16} {'params':>12} {'GMACs':>8}"
    if not args.skip_bench:
        header += f" {'clips/s':>9} {'s/batch':>9}"
    print(header)
    for name in args.models:
        model = build(name)
        row = f"{name:<16} {count_params(model):>12,} {count_macs(model) / 1e9:>8.2f}"
        if not args.skip_bench:
            stats = bench_throughput(model, batch=args.batch, repeats=args.repeats)
            row += f" {stats['clips_per_sec']:>9.2f} {stats['batch_seconds']:>9.3f}"
        print(row, flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
