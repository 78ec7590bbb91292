#!/usr/bin/env python3
"""Wall-time scaling over horizons and methods on the bundled fixtures.

External feeders can be passed as JSON paths (profiles CSV expected next
to each, same stem).  The GA is repeated per cell and judged by its
slowest run.
"""

import argparse
import json
import os

from phasebal import fixtures, harness
from phasebal.metrics import ObjectiveSpec
from phasebal.network import load_feeder, load_profiles


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--feeders", nargs="*", default=[],
                        help="feeder JSON paths; default: bundled fixtures")
    parser.add_argument("--horizons", default="1,8,24")
    parser.add_argument("--methods", default="miqp,ga")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--out", default="out/scaling")
    args = parser.parse_args()

    trio = []
    if args.feeders:
        for path in args.feeders:
            feeder = load_feeder(path)
            loads = load_profiles(path.replace(".feeder.json", ".profiles.csv"),
                                  feeder)
            trio.append((os.path.basename(path), feeder, loads))
    else:
        for name in ("line", "twenty_user"):
            feeder, loads = fixtures.fixture(name)
            trio.append((name, feeder, loads))

    os.makedirs(args.out, exist_ok=True)
    report = harness.cmd_scaling(
        trio,
        horizons=[int(h) for h in args.horizons.split(",")],
        methods=args.methods.split(","),
        repeats=args.repeats,
        objective=ObjectiveSpec("pu_star"),
        csv_path=os.path.join(args.out, "scaling.csv"))
    with open(os.path.join(args.out, "scaling.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    for row in report["reported"]:
        print(f"{row['feeder']:>14} T={row['horizon']:<4} {row['method']:>6} "
              f"{row['wall_time_s']:.2f}s")


if __name__ == "__main__":
    main()
