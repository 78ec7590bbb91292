"""Experiment procedures and reports: optimize, validate, sweep, scale.

Every report recomputes its metric table from the stored assignment via
the exact power flow; nothing is copied through from solver internals.
Reports serialize to JSON (schema_version field, sorted keys) and plot
data goes to plain CSV so rendering stays external.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ga, metrics, miqp, oracle, powerflow
from .errors import ValidationError
from .metrics import ObjectiveSpec
from .network import (ConstraintConfig, Feeder, LoadSeries, PhaseAssignment,
                      binary_feasible, original_assignment, switch_count)
from .problem import Problem, metric_values_exact

SCHEMA_VERSION = 1

REPORT_METRICS = ("pvur", "pvur_star", "iu", "pu", "pu_star")


def metric_table(feeder: Feeder, loads: LoadSeries,
                 assignment: PhaseAssignment) -> dict:
    """All five imbalance metrics plus the loss fraction, from exact PF."""
    sols = powerflow.solve_series(feeder, assignment, loads)
    table = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in REPORT_METRICS:
            spec = ObjectiveSpec(name)
            vals = metric_values_exact(spec, feeder, loads, sols)
            table[name] = metrics.aggregate(spec, vals)
    table["loss_percent"] = float(np.mean([powerflow.losses(s, feeder)
                                           for s in sols]))
    return table


def assignment_payload(feeder: Feeder, assignment: PhaseAssignment) -> dict:
    pr = feeder.reconfigurable_users()
    return {u.id: int(ph) for u, ph in zip(pr, assignment.phases)}


def assignment_from_payload(feeder: Feeder, payload: dict) -> PhaseAssignment:
    pr = feeder.reconfigurable_users()
    missing = [u.id for u in pr if u.id not in payload]
    if missing:
        raise ValidationError(f"assignment payload missing users {missing}")
    return PhaseAssignment(tuple(int(payload[u.id]) for u in pr))


@dataclass
class RunReport:
    method: str
    objective: str
    seed: int | None
    threads: int
    wall_time_s: float
    fitness_calls: int | None
    pf_evaluations: int | None
    objective_value: float
    solver: dict
    assignment: dict
    switches: int
    binary_feasible: bool
    metrics_original: dict
    metrics_solution: dict
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def _bnb_options(constraints: ConstraintConfig, time_limit_s=None,
                 initial=None) -> miqp.BnBOptions:
    return miqp.BnBOptions(leaf_enum_cap=16384, time_limit_s=time_limit_s,
                           initial_incumbent=initial)


def cmd_optimize(feeder: Feeder, loads: LoadSeries, method: str,
                 objective: ObjectiveSpec, constraints: ConstraintConfig,
                 seed: int = 0, threads: int = 1,
                 ga_config: ga.GAConfig | None = None,
                 time_limit_s: float | None = None,
                 trace_path=None) -> RunReport:
    """Run one optimizer and score the result on every exact metric."""
    prob = Problem(feeder, loads, constraints, objective)
    a0 = original_assignment(feeder)
    started = time.monotonic()
    fitness_calls = pf_evals = None
    if method == "ga":
        cfg = ga_config or ga.GAConfig(rng_seed=seed, threads=threads)
        result = ga.run_ga(prob, cfg)
        best, value = result.best, result.best_fitness
        fitness_calls, pf_evals = result.fitness_calls, result.pf_evaluations
        solver = {"generations": len(result.trace),
                  "feasible": bool(result.feasible)}
        if trace_path:
            write_trace_csv(result, trace_path)
    elif method == "miqp":
        prog = miqp.build_program(feeder, loads, constraints, objective)
        res = miqp.branch_and_bound(prog, _bnb_options(constraints, time_limit_s))
        best, value = res.assignment, res.objective
        solver = {"bound": res.bound, "gap": res.gap, "nodes": res.nodes,
                  "status": res.status,
                  "relaxations_solved": res.relaxations_solved}
    elif method == "oracle":
        res = oracle.enumerate_optimal(prob, evaluator="exact")
        best, value = res.best, res.objective
        solver = {"evaluated": res.evaluated}
        pf_evals = res.evaluated
    else:
        raise ValidationError(f"unknown method {method!r}; pick ga, miqp or oracle")
    wall = time.monotonic() - started
    return RunReport(
        method=method,
        objective=objective.metric,
        seed=seed if method == "ga" else None,
        threads=threads,
        wall_time_s=wall,
        fitness_calls=fitness_calls,
        pf_evaluations=pf_evals,
        objective_value=value,
        solver=solver,
        assignment=assignment_payload(feeder, best),
        switches=switch_count(best, a0),
        binary_feasible=binary_feasible(feeder, best, constraints),
        metrics_original=metric_table(feeder, loads, a0),
        metrics_solution=metric_table(feeder, loads, best),
    )


def write_trace_csv(result: ga.GAResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best", "median", "worst"])
        for row in result.trace_rows():
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])


# -- validation over unseen loads --------------------------------------------


def _distribution(values: np.ndarray) -> dict:
    q1, med, q3 = (float(np.percentile(values, p)) for p in (25, 50, 75))
    iqr = q3 - q1
    outliers = values[(values < q1 - 1.5 * iqr) | (values > q3 + 1.5 * iqr)]
    return {"min": float(values.min()), "q1": q1, "median": med, "q3": q3,
            "max": float(values.max()), "mean": float(values.mean()),
            "outliers": [float(v) for v in sorted(outliers)]}


def cmd_validate(feeder: Feeder, assignment: PhaseAssignment,
                 validation_loads: LoadSeries,
                 metric_names=("pvur", "pu"),
                 csv_path=None) -> dict:
    """Per-timestep metric distributions for the original configuration and
    a proposed assignment over a (possibly unseen) horizon."""
    a0 = original_assignment(feeder)
    report = {"schema_version": SCHEMA_VERSION,
              "horizon": validation_loads.horizon, "metrics": {}}
    per_t = {}
    for name in metric_names:
        spec = ObjectiveSpec(name)
        series = {}
        for tag, a in (("original", a0), ("solution", assignment)):
            sols = powerflow.solve_series(feeder, a, validation_loads)
            vals = metric_values_exact(spec, feeder, validation_loads, sols)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                reduced = (vals.max(axis=0) if spec.is_voltage_metric
                           else np.nanmean(vals, axis=0))
            series[tag] = reduced
        report["metrics"][name] = {tag: _distribution(v[np.isfinite(v)])
                                   for tag, v in series.items()}
        per_t[name] = series
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["t"] + [f"{n}_{tag}" for n in metric_names
                              for tag in ("original", "solution")]
            writer.writerow(header)
            for t in range(validation_loads.horizon):
                row = [t] + [repr(float(per_t[n][tag][t])) for n in metric_names
                             for tag in ("original", "solution")]
                writer.writerow(row)
    return report


# -- switching budget sweep ---------------------------------------------------


@dataclass
class SweepReport:
    objective: str
    method: str
    grid: list
    values: list
    switches_used: list
    failures: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION


def cmd_sweep_switches(feeder: Feeder, loads: LoadSeries,
                       objective: ObjectiveSpec, grid,
                       method: str = "miqp", seed: int = 0,
                       constraints: ConstraintConfig | None = None,
                       time_limit_s: float | None = 20.0,
                       csv_path=None) -> SweepReport:
    """One optimization per budget; larger budgets warm-start from smaller
    ones, which also enforces the expected monotone improvement."""
    grid = sorted(set(int(g) for g in grid))
    values, used, failures = [], [], {}
    prev = None
    for budget in grid:
        cons = ConstraintConfig(
            delta_max=budget,
            gamma_low=constraints.gamma_low if constraints else 0,
            gamma_upp=constraints.gamma_upp if constraints else 10 ** 9,
            v_min=constraints.v_min if constraints else 0.90,
            v_max=constraints.v_max if constraints else 1.10,
            enforce_phase_counts=(constraints.enforce_phase_counts
                                  if constraints else False))
        try:
            if method == "miqp":
                prog = miqp.build_program(feeder, loads, cons, objective)
                res = miqp.branch_and_bound(
                    prog, _bnb_options(cons, time_limit_s, initial=prev))
                best, value = res.assignment, res.objective
            else:
                report = cmd_optimize(feeder, loads, method, objective, cons,
                                      seed=seed)
                best = assignment_from_payload(feeder, report.assignment)
                value = report.objective_value
        except Exception as exc:  # record, keep sweeping
            failures[budget] = f"{type(exc).__name__}: {exc}"
            values.append(None)
            used.append(None)
            continue
        prev = best
        values.append(float(value))
        used.append(switch_count(best, original_assignment(feeder)))
    ok = [v for v in values if v is not None]
    for a, b in zip(ok, ok[1:]):
        if b > a + 1e-9:
            raise ValidationError(
                "sweep objective increased with a larger switching budget")
    report = SweepReport(objective=objective.metric, method=method,
                         grid=grid, values=values, switches_used=used,
                         failures=failures)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["delta_max", "objective", "switches_used"])
            for g, v, s in zip(grid, values, used):
                writer.writerow([g, "" if v is None else repr(v),
                                 "" if s is None else s])
    return report


# -- scaling ------------------------------------------------------------------


def cmd_scaling(feeder_loads: list, horizons, methods, repeats: int = 5,
                objective: ObjectiveSpec | None = None,
                constraints: ConstraintConfig | None = None,
                csv_path=None) -> dict:
    """Wall-time grid over (feeder, horizon, method).

    The GA is repeated and judged by its slowest run; deterministic
    methods run once per cell.  Rows carry every repeat.
    """
    objective = objective or ObjectiveSpec("pu_star")
    rows = []
    summary = {}
    for label, feeder, loads in feeder_loads:
        for horizon in horizons:
            if horizon > loads.horizon:
                raise ValidationError(
                    f"horizon {horizon} exceeds available {loads.horizon}")
            window = loads.slice_window(0, horizon)
            cons = constraints or ConstraintConfig.from_fractions(
                feeder, delta_max=5)
            for method in methods:
                n_rep = repeats if method == "ga" else 1
                times = []
                for rep in range(n_rep):
                    started = time.monotonic()
                    cmd_optimize(feeder, window, method, objective, cons,
                                 seed=rep)
                    dt = time.monotonic() - started
                    times.append(dt)
                    rows.append({"feeder": label, "horizon": horizon,
                                 "method": method, "repeat": rep,
                                 "wall_time_s": dt})
                summary[(label, horizon, method)] = max(times)
    report = {"schema_version": SCHEMA_VERSION,
              "objective": objective.metric,
              "rows": rows,
              "reported": [{"feeder": k[0], "horizon": k[1], "method": k[2],
                            "wall_time_s": v} for k, v in summary.items()]}
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feeder", "horizon", "method", "repeat",
                             "wall_time_s"])
            for row in rows:
                writer.writerow([row["feeder"], row["horizon"], row["method"],
                                 row["repeat"], repr(row["wall_time_s"])])
    return report


# -- one-shot power flow -------------------------------------------------------


def cmd_pf(feeder: Feeder, loads: LoadSeries, t: int | None = None) -> dict:
    """Solve the exact power flow and dump voltages, flows and losses."""
    a0 = original_assignment(feeder)
    steps = range(loads.horizon) if t is None else [t]
    out = {"schema_version": SCHEMA_VERSION, "timesteps": {}}
    for step in steps:
        sol = powerflow.solve_pf(feeder, a0, loads, step)
        entry = {
            "converged": bool(sol.converged),
            "iterations": sol.iterations,
            "max_mismatch_pu": sol.max_mismatch,
            "voltage_magnitude_pu": {bus: [float(v) for v in sol.u_mag()[i]]
                                     for i, bus in enumerate(feeder.buses)},
            "loss_percent": powerflow.losses(sol, feeder) if sol.converged else None,
            "flows_pu": {f"{k[0]}->{k[1]}":
                         {"p": [float(x) for x in np.real(s_from)],
                          "q": [float(x) for x in np.imag(s_from)]}
                         for k, (s_from, _) in sol.flows.items()},
        }
        out["timesteps"][str(step)] = entry
    return out
