#!/usr/bin/env python3
"""Compare MIQP, GA and the exhaustive oracle on one feeder.

For each proxy objective the MIQP solution and a batch of seeded GA runs
are scored on every exact metric; the resulting tables mirror the usual
before/after comparison (original configuration vs optimized).  The MIQP
solutions are additionally validated on an unseen synthetic horizon.
"""

import argparse
import json
import os

import numpy as np

from phasebal import fixtures, ga, harness, miqp
from phasebal.metrics import ObjectiveSpec
from phasebal.network import ConstraintConfig, load_feeder, load_profiles
from phasebal.problem import Problem, evaluate_exact


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--feeder", help="feeder JSON (default: twenty_user fixture)")
    parser.add_argument("--profiles", help="profiles CSV")
    parser.add_argument("--out", default="out/compare")
    parser.add_argument("--delta-max", type=int, default=5)
    parser.add_argument("--ga-runs", type=int, default=20)
    parser.add_argument("--f-calls", type=int, default=1500)
    args = parser.parse_args()

    if args.feeder:
        feeder = load_feeder(args.feeder)
        loads = load_profiles(args.profiles, feeder)
    else:
        feeder, loads = fixtures.fixture("twenty_user")
    os.makedirs(args.out, exist_ok=True)
    cons = ConstraintConfig(delta_max=args.delta_max)

    summary = {}
    for proxy, exact in (("pvur_star", "pvur"), ("pu_star", "pu")):
        report = harness.cmd_optimize(feeder, loads, "miqp",
                                      ObjectiveSpec(proxy), cons)
        with open(os.path.join(args.out, f"miqp_{proxy}.json"), "w") as fh:
            fh.write(report.to_json())
        print(f"MIQP {proxy}: objective {report.objective_value:.4f}, "
              f"{report.switches} switches, exact {exact} "
              f"{report.metrics_original[exact]:.3f} -> "
              f"{report.metrics_solution[exact]:.3f}")

        prob = Problem(feeder, loads, cons, ObjectiveSpec(exact))
        runs = []
        for seed in range(args.ga_runs):
            cfg = ga.GAConfig(population_size=50,
                              max_fitness_calls=args.f_calls, rng_seed=seed)
            res = ga.run_ga(prob, cfg)
            runs.append(res.best_fitness)
            if seed == 0:
                harness.write_trace_csv(
                    res, os.path.join(args.out, f"ga_trace_{exact}.csv"))
        runs = np.array(runs)
        print(f"GA {exact} over {args.ga_runs} runs: "
              f"best {runs.min():.4f} / median {np.median(runs):.4f} / "
              f"worst {runs.max():.4f}")
        summary[proxy] = {"miqp": report.objective_value,
                          "ga_best": float(runs.min()),
                          "ga_median": float(np.median(runs)),
                          "ga_worst": float(runs.max())}

        # unseen-horizon validation of the MIQP solution
        ids = {u.id: float(np.mean(loads.p[:, loads.column(u.id)]))
               for u in feeder.users}
        unseen = fixtures.synthetic_profiles(ids, horizon=8 * 24, seed=999)
        assignment = harness.assignment_from_payload(feeder, report.assignment)
        val = harness.cmd_validate(
            feeder, assignment, unseen,
            csv_path=os.path.join(args.out, f"validate_{proxy}.csv"))
        with open(os.path.join(args.out, f"validate_{proxy}.json"), "w") as fh:
            json.dump(val, fh, sort_keys=True, indent=1)

    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
    print(f"artifacts in {args.out}/")


if __name__ == "__main__":
    main()
