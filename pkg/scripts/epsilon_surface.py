"""Inflation term epsilon(c, q, rho) of the exchangeable bound on a (q, rho) grid.

Usage: python3 scripts/epsilon_surface.py [--c 0.1]
Writes results/epsilon_surface.csv and prints the grid.
"""
import argparse
import csv
import pathlib

import numpy as np

from seqcrt.theory import epsilon_surface


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c", type=float, default=0.1)
    ap.add_argument("--output", default="results/epsilon_surface.csv")
    args = ap.parse_args()
    q_grid = np.round(np.arange(0.05, 0.301, 0.05), 3)
    rho_grid = np.round(np.arange(0.0, 0.501, 0.05), 3)
    eps = epsilon_surface(args.c, q_grid, rho_grid)
    pathlib.Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["c", "q", "rho", "epsilon"])
        for i, q in enumerate(q_grid):
            for k, rho in enumerate(rho_grid):
                writer.writerow([args.c, q, rho, repr(float(eps[i, k]))])
    print("q \\ rho " + " ".join(f"{r:>6.2f}" for r in rho_grid))
    for i, q in enumerate(q_grid):
        print(f"{q:>7.2f} " + " ".join(f"{v:>6.3f}" if np.isfinite(v) else f"{'-':>6}" for v in eps[i]))


if __name__ == "__main__":
    main()
