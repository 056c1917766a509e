"""Monte Carlo FDR of the global-null sharpness construction as p grows.

Usage: python3 scripts/global_null_sweep.py [--reps 10000]
"""
import argparse

from seqcrt.core import RngStream
from seqcrt.theory import AdversarialSpec, global_null_m0, monte_carlo_fdr


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--c", type=float, default=0.1)
    ap.add_argument("--q", type=float, default=0.1)
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    print(f"limit q + c(1 - q) = {args.q + args.c * (1 - args.q):.4f}")
    print(f"{'p':>7} {'m0':>6} {'exact':>8} {'MC':>8} {'SE':>7}")
    for p in (100, 1000, 10_000):
        m0 = global_null_m0(p, args.c, args.q)
        fdr, se = monte_carlo_fdr(AdversarialSpec("global_null_sharp", p, args.c, args.q), args.reps,
                                  RngStream(args.seed))
        print(f"{p:>7} {m0:>6} {args.c * p / m0:>8.4f} {fdr:>8.4f} {se:>7.4f}")


if __name__ == "__main__":
    main()
