"""parity-figs command line: render figures from experiment CSV records."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, PlotSpec, RenderError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parity-figs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from a records CSV")
    p_render.add_argument("--csv", required=True, help="path to records.csv")
    p_render.add_argument("--figure", required=True, choices=FIGURE_KINDS)
    p_render.add_argument("--out", required=True, help="output image path (.png or .pdf)")
    p_render.add_argument(
        "--group-by",
        default="params_hash",
        help="comma-separated record columns that define one curve/row",
    )
    p_render.add_argument("--metric", default="", help="override the figure's default metric")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            input_csv=args.csv,
            figure=args.figure,
            output=args.out,
            group_by=tuple(c for c in args.group_by.split(",") if c),
            metric=args.metric,
        )
        render(spec)
    except (RenderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
