"""Command line: ``plotkit <figure-kind> --in <artifacts...> --out <image>``."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render study figures from CSV/JSON artifacts.",
    )
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS),
                        help="figure kind to render")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input artifact path(s)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    options = {"dpi": args.dpi}
    if args.title:
        options["title"] = args.title
    try:
        spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.out, options=options)
        out = render(spec)
    except SchemaError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
