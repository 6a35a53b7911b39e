"""Command line entry point: render figures from harness csv outputs."""

import argparse
import sys

from .figures import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Regenerate figures from experiment csv logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    render_p = sub.add_parser("render", help="draw one figure from csv inputs")
    render_p.add_argument("--kind", required=True, choices=KINDS)
    render_p.add_argument("--in", dest="inputs", nargs="+", required=True,
                          metavar="CSV", help="input csv files")
    render_p.add_argument("--out", required=True, help="output image path")
    render_p.add_argument("--labels", default=None,
                          help="comma-separated curve labels (comparison kind)")
    render_p.add_argument("--window", type=int, default=None,
                          help="expected moving-average window of the inputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    labels = None
    if args.labels is not None:
        labels = tuple(part.strip() for part in args.labels.split(",") if part.strip())
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs), out=args.out,
                      labels=labels, window=args.window)
    try:
        path = render(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
