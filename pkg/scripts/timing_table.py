"""Wall-clock comparison of the original and one-shot CRT inside the symmetric pipeline.

Usage: python3 scripts/timing_table.py [--config scripts/configs/timing.json]
Writes results/timing.json.
"""
import argparse
import json
import pathlib

from seqcrt.harness import ExperimentConfig, timing_comparison

HERE = pathlib.Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs" / "timing.json"))
    ap.add_argument("--output", default="results/timing.json")
    args = ap.parse_args()
    out = timing_comparison(ExperimentConfig.load(args.config), workers=1)
    pathlib.Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    pathlib.Path(args.output).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"n={out['n']} p={out['p']} B={out['B']} reps={out['n_reps']}")
    print(f"original  {out['original_s']:8.2f} s per replication")
    print(f"one-shot  {out['oneshot_s']:8.2f} s per replication")
    print(f"ratio     {out['ratio']:8.3f}")


if __name__ == "__main__":
    main()
