#!/usr/bin/env python3
"""Objective vs switching budget on one feeder (plot data to CSV)."""

import argparse
import os

from phasebal import fixtures, harness
from phasebal.metrics import ObjectiveSpec
from phasebal.network import load_feeder, load_profiles

_METRIC = {"pvur-star": "pvur_star", "pu-star": "pu_star"}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--feeder")
    parser.add_argument("--profiles")
    parser.add_argument("--objective", choices=sorted(_METRIC), default="pu-star")
    parser.add_argument("--grid", default="0,1,2,3,5,10,20")
    parser.add_argument("--time-limit", type=float, default=20.0)
    parser.add_argument("--out", default="out/sweep.csv")
    args = parser.parse_args()

    if args.feeder:
        feeder = load_feeder(args.feeder)
        loads = load_profiles(args.profiles, feeder)
    else:
        feeder, loads = fixtures.fixture("twenty_user")
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    grid = [int(g) for g in args.grid.split(",")]
    report = harness.cmd_sweep_switches(
        feeder, loads, ObjectiveSpec(_METRIC[args.objective]), grid,
        time_limit_s=args.time_limit, csv_path=args.out)
    for g, v in zip(report.grid, report.values):
        print(f"delta_max={g:3d}  objective={v}")
    print(f"plot data in {args.out}")


if __name__ == "__main__":
    main()
