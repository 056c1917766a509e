"""Histogram of max_j a_j on block-Gaussian data and the bound it implies.

Usage: python3 scripts/aj_histogram.py [--m-outer 50] [--full-scale]
Writes results/aj_histogram.json. The default scale runs in about 20 minutes on one CPU.
"""
import argparse
import json
import math
import pathlib

import numpy as np

from seqcrt.core import RngStream
from seqcrt.covariates import GaussianModel
from seqcrt.crt import CrtConfig
from seqcrt.stats import StatisticKind
from seqcrt.theory import estimate_aj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=30)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--amplitude", type=float, default=3.0)
    ap.add_argument("--c", type=float, default=0.3)
    ap.add_argument("--q", type=float, default=0.1)
    ap.add_argument("--m-inner", type=int, default=2000)
    ap.add_argument("--m-outer", type=int, default=50)
    ap.add_argument("--full-scale", action="store_true", help="p=120, n=200, k=30, 5000 inner, 500 outer")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output", default="results/aj_histogram.json")
    args = ap.parse_args()
    if args.full_scale:
        args.p, args.n, args.k, args.m_inner, args.m_outer = 120, 200, 30, 5000, 500
    model = GaussianModel.block(args.p, 3, 0.3)
    beta = np.zeros(args.p)
    beta[RngStream(args.seed, (0,)).generator().choice(args.p, size=args.k, replace=False)] = \
        args.amplitude / math.sqrt(args.n)
    cfg = CrtConfig(19, "original", StatisticKind("abs_correlation"))
    est = estimate_aj(model, beta, 1.0, None, cfg, args.c, args.m_inner, args.m_outer, RngStream(args.seed, (1,)),
                      n=args.n)
    counts, edges = est.histogram(bins=np.arange(0.0, 1.0001, 0.025))
    bound = est.bound(args.q).bound_value
    doc = {"p": args.p, "n": args.n, "k": args.k, "c": args.c, "q": args.q, "max_aj": est.max_aj.tolist(),
           "delta": est.delta, "epsilon": est.epsilon, "bound": bound, "short_cells": est.short_cells,
           "histogram": {"edges": edges.tolist(), "counts": counts.tolist()}}
    pathlib.Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    pathlib.Path(args.output).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    for lo, cnt in zip(edges[:-1], counts):
        if cnt:
            print(f"[{lo:.3f}, {lo + 0.025:.3f})  {'#' * int(cnt)}")
    print(f"delta={est.delta:.4f} epsilon={est.epsilon} bound(q={args.q})={bound:.4f}")


if __name__ == "__main__":
    main()
