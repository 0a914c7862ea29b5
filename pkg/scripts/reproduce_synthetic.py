#!/usr/bin/env python3
"""Run the seeded benchmark end to end and tally extreme-point wins.

Each seed gets its own output directory with metrics, baseline metrics, the
trained bundle, and a config snapshot; the script ends with a win count of
full pipeline vs the single-band baseline on extreme-point MSE.
"""

import argparse
import csv
import sys
from pathlib import Path

from rarecast.cli import main as rarecast_main


def _extreme_mse(metrics_csv: Path) -> float | None:
    with open(metrics_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["level"] == "extreme":
                return float(row["mse"]) if row["mse"] else None
    return None


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated run seeds")
    parser.add_argument("--out", default="runs/reproduce", help="root output directory")
    args = parser.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    rows = []
    for seed in seeds:
        out = Path(args.out) / f"seed{seed}"
        rc = rarecast_main(["reproduce", "--seed", str(seed), "--out", str(out)])
        if rc != 0:
            print(f"seed {seed}: reproduce failed (rc={rc})", file=sys.stderr)
            return rc
        rows.append(
            (seed, _extreme_mse(out / "metrics.csv"), _extreme_mse(out / "metrics_baseline.csv"))
        )

    print(f"\n{'seed':>4}  {'full extreme mse':>17}  {'baseline':>10}  verdict")
    wins = 0
    for seed, ours, theirs in rows:
        if ours is None or theirs is None:
            print(f"{seed:>4}  {'(no extreme points)':>17}")
            continue
        won = ours <= theirs
        wins += won
        print(f"{seed:>4}  {ours:>17.6g}  {theirs:>10.6g}  {'<=' if won else '>'}")
    print(f"extreme-point wins: {wins}/{len(rows)}")
    return 0 if wins * 5 >= len(rows) * 4 else 1


if __name__ == "__main__":
    sys.exit(main())
