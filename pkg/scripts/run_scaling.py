#!/usr/bin/env python3
"""Dimension sweep of the mean exact matching cost.

Reproduces the asymptotic shapes: E[cost] ~ r^2 * N (d=1), r^2 ln N (d=2),
r^2 (d>2). Writes one CSV per dimension plus a JSON summary with the fit.

Usage: python scripts/run_scaling.py [--outdir results] [--seed 7] [--quick]
"""

import argparse
import sys
from pathlib import Path

from pointmatch.cli import run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--quick", action="store_true", help="small N and few trials")
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.quick:
        ns, trials = "64,128,256", "50"
    else:
        ns, trials = "64,256,1024,4096", "200,200,100,30"

    for dim in (1, 2, 3):
        code = run([
            "scaling",
            "--dim", str(dim),
            "--n", ns,
            "--trials", trials,
            "--seed", str(args.seed + dim),
            "--out", str(outdir / f"scaling_d{dim}.csv"),
            "--json", str(outdir / f"scaling_d{dim}.json"),
        ])
        if code != 0:
            return code
        print(f"d={dim}: wrote {outdir}/scaling_d{dim}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
