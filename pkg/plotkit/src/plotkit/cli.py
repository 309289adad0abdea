"""Command line: plot --traj run.csv --meta run.json --kind paths-2d --out fig.png"""

from __future__ import annotations

import argparse
import sys

from .io import PlotError
from .render import KINDS, PlotJob, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="render a trajectory CSV + sidecar into a figure")
    parser.add_argument("--traj", required=True, help="trajectory CSV file")
    parser.add_argument("--meta", required=True, help="JSON sidecar file")
    parser.add_argument("--kind", required=True, choices=list(KINDS))
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--stride", type=int, default=1,
                        help="plot every stride-th sample (endpoints kept)")
    parser.add_argument("--no-labels", action="store_true",
                        help="suppress the legend")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)

    job = PlotJob(traj_path=args.traj, meta_path=args.meta, kind=args.kind,
                  out_path=args.out, stride=args.stride,
                  labels=not args.no_labels, title=args.title)
    try:
        out = render(job)
    except (PlotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
