"""Command-line entry point: ``plots <kind> --in CSV --out IMG``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import KINDS, FigureJob, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render a figure from a simulator CSV artifact.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="csv", required=True, type=Path,
                        help="input CSV written by the simulator CLI")
    parser.add_argument("--out", dest="out", required=True, type=Path,
                        help="output image path (suffix selects the format)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out = render(FigureJob(csv_path=args.csv, kind=args.kind,
                               out_path=args.out))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.kind}: wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
