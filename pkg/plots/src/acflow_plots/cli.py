"""`plots render --in DIR --out DIR --figs all`"""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURES, MissingArtifact, MissingColumn, render


def build_parser():
    ap = argparse.ArgumentParser(prog="plots")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("render")
    r.add_argument("--in", dest="indir", required=True)
    r.add_argument("--out", dest="outdir", required=True)
    r.add_argument("--figs", nargs="+", default=["all"],
                   choices=list(FIGURES) + ["all"])
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        files = render(args.indir, args.outdir, args.figs)
    except (MissingArtifact, MissingColumn, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
