"""FDR and power of the sequential CRT over an amplitude sweep on AR(1) linear data.

Usage: python3 scripts/fig4_scaled.py [--config scripts/configs/fig4_scaled.json] [--workers N]
Writes results/fig4_scaled.csv (one row per replication) and prints a summary table.
"""
import argparse
import pathlib

from seqcrt.harness import ExperimentConfig, run_experiment

HERE = pathlib.Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs" / "fig4_scaled.json"))
    ap.add_argument("--reps", type=int, help="override n_reps")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--output", default="results/fig4_scaled.csv")
    args = ap.parse_args()
    doc = ExperimentConfig.load(args.config).to_json()
    if args.reps:
        doc["n_reps"] = args.reps
    pathlib.Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    doc["output"] = args.output
    result = run_experiment(ExperimentConfig.from_json(doc), workers=args.workers,
                            progress=lambda done, total: print(f"\r{done}/{total}", end="", flush=True))
    print()
    print(f"{'A':>6} {'method':<20} {'FDR':>7} {'SE':>7} {'power':>7}")
    for row in result.summary():
        print(f"{row['amplitude']:>6.2f} {row['method']:<20} {row['fdr']:>7.3f} {row['fdr_se']:>7.3f} {row['power']:>7.3f}")
    if result.errors:
        print(f"{len(result.errors)} replication(s) failed; see the error column")


if __name__ == "__main__":
    main()
