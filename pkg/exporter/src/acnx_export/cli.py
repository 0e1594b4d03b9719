"""Command line entry point: convert one checkpoint archive."""

from __future__ import annotations

import argparse
import sys

from .convert import export
from .errors import ExportError
from .tables import TABLES

EXIT_OK = 0
EXIT_FAIL = 1  # conversion refused (missing tensors, shape conflicts)
EXIT_USAGE = 2  # bad invocation (unknown model, unreadable source)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="export",
        description="Convert a PyTorch checkpoint to a .acnx archive.",
    )
    ap.add_argument("--src", required=True, help="source .pth/.pt checkpoint")
    ap.add_argument("--model", required=True, choices=sorted(TABLES), help="target model")
    ap.add_argument("--out", required=True, help="output .acnx path")
    ap.add_argument(
        "--report",
        default=None,
        help="mapping report CSV path (default: <out>.map.csv)",
    )
    args = ap.parse_args(argv)

    report_path = args.report or f"{args.out}.map.csv"
    try:
        conv = export(args.src, args.model, args.out, report_path)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL

    values = sum(int(a.size) for a in conv.state.values())
    print(f"written={args.out}")
    print(f"report={report_path}")
    print(f"entries={len(conv.state)}")
    print(f"values={values}")
    print(f"mapped={conv.mapped}")
    print(f"zero_filled={conv.zero_filled}")
    print(f"unmapped_source={len(conv.unmapped_source)}")
    for name in conv.unmapped_source:
        print(f"unmapped: {name}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
