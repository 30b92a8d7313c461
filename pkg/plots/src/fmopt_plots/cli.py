"""Command-line renderer for benchmark output directories."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import PlotSpec, SchemaError, render_convergence, render_dvh


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmopt-plots", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_conv = sub.add_parser("convergence", help="render per-case convergence figures")
    p_conv.add_argument("--in", dest="input_dir", required=True,
                        help="benchmark output directory with trace_*.csv files")
    p_conv.add_argument("--out", dest="output_dir", required=True)
    p_conv.add_argument("--case", action="append", default=[],
                        help="restrict to a case (repeatable; default all)")
    p_conv.add_argument("--linear-y", action="store_true",
                        help="linear instead of log cost axis")
    p_conv.add_argument("--format", default="png", help="image format (default png)")

    p_dvh = sub.add_parser("dvh", help="render a DVH CSV with optional goal markers")
    p_dvh.add_argument("--dvh", required=True, help="DVH CSV (structure,dose_gy,volume_fraction)")
    p_dvh.add_argument("--goals", help="goals JSON written by the harness")
    p_dvh.add_argument("--out", dest="output_dir", required=True)
    p_dvh.add_argument("--format", default="png")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "convergence":
            spec = PlotSpec(
                input_dir=Path(args.input_dir),
                output_dir=Path(args.output_dir),
                cases=tuple(args.case),
                log_y=not args.linear_y,
                image_format=args.format,
            )
            for path in render_convergence(spec):
                print(path)
            return 0
        if args.command == "dvh":
            path = render_dvh(
                Path(args.dvh), Path(args.output_dir),
                goals_json=Path(args.goals) if args.goals else None,
                image_format=args.format,
            )
            print(path)
            return 0
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
