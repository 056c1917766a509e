"""Command-line entry point: ``python -m seqcrt <subcommand>``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .core import ResponseKind, RngStream, SeqStepParams
from .covariates import GaussianModel
from .crt import CrtConfig
from .harness import ExperimentConfig, load_dataset_csv, run_experiment, select_on_data, timing_comparison
from .stats import ScoreKind, StatisticKind
from .theory import (AdversarialSpec, bound_almost_independent, bound_arbitrary, bound_exchangeable,
                     epsilon_surface, estimate_aj, global_null_m0, monte_carlo_fdr)


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _emit(doc, path=None):
    text = json.dumps(doc, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_simulate(args) -> int:
    config = ExperimentConfig.load(args.config)
    overrides = {}
    if args.output:
        overrides["output"] = args.output
    if args.no_timing:
        overrides["record_runtime"] = False
    if overrides:
        config = ExperimentConfig.from_json({**config.to_json(), **overrides})
    result = run_experiment(config, workers=args.workers)
    if not config.output:
        sys.stdout.write(result.to_csv())
    for row in result.summary():
        logging.info("A=%g %s: FDR %.3f power %.3f (%d reps)", row["amplitude"], row["method"], row["fdr"],
                     row["power"], row["n_reps"])
    return 1 if result.errors else 0


def cmd_bounds(args) -> int:
    if args.surface:
        q_grid, rho_grid = _floats(args.q_grid), _floats(args.rho_grid)
        eps = epsilon_surface(args.c, q_grid, rho_grid)
        out = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["c", "q", "rho", "epsilon"])
        for i, q in enumerate(q_grid):
            for k, r in enumerate(rho_grid):
                writer.writerow([args.c, q, r, repr(float(eps[i, k]))])
        if args.output:
            out.close()
        return 0
    if args.kind == "almost_independent":
        report = bound_almost_independent(args.c, args.q, args.delta, args.epsilon)
    elif args.kind == "exchangeable":
        report = bound_exchangeable(args.c, args.q, args.rho)
    else:
        if args.p is None or args.nulls is None:
            raise SystemExit("bounds --kind arbitrary needs --p and --nulls")
        report = bound_arbitrary(args.c, args.q, [int(v) for v in _floats(args.nulls)], args.p)
    _emit(report.to_json(), args.output)
    return 0


def cmd_adversarial(args) -> int:
    spec = AdversarialSpec(args.kind, args.p, args.c, args.q, args.rho or 0.0)
    fdr, se = monte_carlo_fdr(spec, args.reps, RngStream(args.seed))
    doc = {"kind": spec.kind.value, "p": args.p, "c": args.c, "q": args.q, "reps": args.reps, "fdr": fdr, "se": se}
    if spec.kind.value == "global_null_sharp":
        m0 = global_null_m0(args.p, args.c, args.q)
        doc.update(m0=m0, exact_fdr=args.c * args.p / m0, limit=args.q + args.c * (1 - args.q))
    else:
        doc.update(rho=args.rho, bound=bound_exchangeable(args.c, args.q, args.rho).bound_value)
    _emit(doc, args.output)
    return 0


def cmd_aj(args) -> int:
    if args.full_scale:
        args.p, args.n, args.k, args.m_inner, args.m_outer = 120, 200, 30, 5000, 500
    model = GaussianModel.block(args.p, args.block_size, args.off_diag)
    gen = RngStream(args.seed, (0,)).generator()
    beta = np.zeros(args.p)
    beta[gen.choice(args.p, size=args.k, replace=False)] = args.amplitude / np.sqrt(args.n)
    stat = StatisticKind(args.statistic)
    if args.statistic == "neighborhood_ols":
        stat = StatisticKind("neighborhood_ols", neighborhood={j: model.neighbors(j).tolist() for j in range(args.p)})
    cfg = CrtConfig(args.B, "original", stat)
    est = estimate_aj(model, beta, 1.0, None, cfg, args.c, args.m_inner, args.m_outer, RngStream(args.seed, (1,)),
                      n=args.n, tail=args.tail)
    counts, edges = est.histogram(bins=20, range_=(0.0, 1.0))
    _emit({"c": args.c, "q": args.q, "max_aj": est.max_aj.tolist(), "delta": est.delta, "epsilon": est.epsilon,
           "bound": est.bound(args.q).bound_value, "empty_cells": est.empty_cells,
           "histogram": {"edges": edges.tolist(), "counts": counts.tolist()}}, args.output)
    return 0


def cmd_select(args) -> int:
    kind = ResponseKind.BINARY if args.binary else ResponseKind.CONTINUOUS
    dataset = load_dataset_csv(args.data, kind)
    model = None
    if args.model:
        with open(args.model, encoding="utf-8") as fh:
            model = json.load(fh)
    elif not args.fit_gaussian:
        raise SystemExit("select needs --model <json> or --fit-gaussian")
    cfg = CrtConfig(args.B, args.mode, StatisticKind(args.statistic), ScoreKind(args.score))
    sel = select_on_data(dataset, model, cfg, SeqStepParams(args.c, args.q), RngStream(args.seed),
                         fit=args.fit_gaussian, shrink=args.shrink, method=args.method)
    _emit(sel.to_json(), args.output)
    return 0


def cmd_timing(args) -> int:
    config = ExperimentConfig.load(args.config)
    _emit(timing_comparison(config, workers=args.workers), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqcrt", description="Sequential CRT variable selection and FDR bounds.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation grid and write CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--output")
    s.add_argument("--workers", type=int)
    s.add_argument("--no-timing", action="store_true", help="write runtime_ms=0 for byte-reproducible output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bounds", help="evaluate an FDR bound (JSON) or the epsilon surface (CSV)")
    s.add_argument("--kind", choices=["almost_independent", "exchangeable", "arbitrary"], default="exchangeable")
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--epsilon", type=float, default=0.0)
    s.add_argument("--rho", type=float)
    s.add_argument("--p", type=int)
    s.add_argument("--nulls", help="comma-separated 1-based null positions")
    s.add_argument("--surface", action="store_true")
    s.add_argument("--q-grid", default="0.05,0.1,0.15,0.2")
    s.add_argument("--rho-grid", default="0,0.1,0.2,0.3,0.4,0.5")
    s.add_argument("--output")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("adversarial", help="Monte Carlo FDR of a sharpness construction")
    s.add_argument("--kind", choices=["global_null_sharp", "exchangeable_rho_sharp"], required=True)
    s.add_argument("--p", type=int, default=1000)
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--rho", type=float)
    s.add_argument("--reps", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_adversarial)

    s = sub.add_parser("aj-estimate", help="estimate max_j a_j on block-Gaussian data")
    s.add_argument("--p", type=int, default=30)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--amplitude", type=float, default=3.0)
    s.add_argument("--block-size", type=int, default=3)
    s.add_argument("--off-diag", type=float, default=0.3)
    s.add_argument("--statistic", choices=["abs_correlation", "neighborhood_ols"], default="abs_correlation")
    s.add_argument("--B", type=int, default=19)
    s.add_argument("--c", type=float, default=0.3)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--m-inner", type=int, default=2000)
    s.add_argument("--m-outer", type=int, default=50)
    s.add_argument("--tail", type=float, default=0.005)
    s.add_argument("--full-scale", action="store_true", help="p=120, n=200, k=30, 5000 inner, 500 outer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_aj)

    s = sub.add_parser("select", help="run the sequential CRT on a CSV dataset")
    s.add_argument("--data", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--model", help="covariate model JSON")
    g.add_argument("--fit-gaussian", action="store_true")
    s.add_argument("--shrink", type=float, default=1e-3)
    s.add_argument("--binary", action="store_true", help="treat y as a 0/1 response")
    s.add_argument("--method", choices=["symmetric", "split"], default="symmetric")
    s.add_argument("--mode", choices=["one_shot", "original"], default="one_shot")
    s.add_argument("--statistic", choices=["lasso_coefficient", "abs_correlation"], default="lasso_coefficient")
    s.add_argument("--score", choices=["max_stat", "max_minus_median"], default="max_stat")
    s.add_argument("--B", type=int, default=9)
    s.add_argument("--c", type=float, default=0.1)
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("timing", help="one-shot vs original CRT wall-clock comparison")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_timing)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
