"""Console entry points: plot-trajectories and plot-convergence."""
from __future__ import annotations

import argparse
import sys

from .plots import SchemaError, plot_convergence, plot_trajectories


def _run(render, prog: str, argv: list[str] | None) -> int:
    parser = argparse.ArgumentParser(prog=prog)
    parser.add_argument("csv", help="input CSV file")
    parser.add_argument("-o", "--out", required=True, help="output image file (e.g. PNG)")
    args = parser.parse_args(argv)
    try:
        count = render(args.csv, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({count} series)")
    return 0


def main_trajectories(argv: list[str] | None = None) -> int:
    return _run(plot_trajectories, "plot-trajectories", argv)


def main_convergence(argv: list[str] | None = None) -> int:
    return _run(plot_convergence, "plot-convergence", argv)


if __name__ == "__main__":
    sys.exit(main_trajectories())
