"""Problem bundle and objective evaluation pipelines.

A Problem ties a feeder, a demand horizon, the planning constraints and
the objective together.  Two evaluators are available: the exact
fixed-point power flow and the lossless linear model.  Both feed the same
metric aggregation, so a configuration can be scored consistently by
either route.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lindist, metrics, powerflow
from .errors import ConvergenceError, MetricError, ValidationError
from .metrics import ObjectiveSpec
from .network import (ConstraintConfig, Feeder, LoadSeries, PhaseAssignment,
                      binary_feasible, original_assignment)

EVALUATORS = ("exact", "ld3f")


@dataclass(frozen=True, eq=False)
class Problem:
    feeder: Feeder
    loads: LoadSeries
    constraints: ConstraintConfig
    objective: ObjectiveSpec
    pf_tol: float = powerflow.DEFAULT_TOL
    pf_max_iter: int = powerflow.DEFAULT_MAX_ITER

    def original(self) -> PhaseAssignment:
        return original_assignment(self.feeder)


@lru_cache(maxsize=None)
def _denominator_cache(feeder: Feeder, loads: LoadSeries, key) -> float:
    return metrics.denominator(feeder, loads, feeder.branch(*key))


def branch_denominator(feeder: Feeder, loads: LoadSeries, branch) -> float:
    return _denominator_cache(feeder, loads, branch.key)


def _flow_metric_values(metric: str, feeder: Feeder, loads: LoadSeries,
                        branches, p_by_branch, i_by_branch) -> np.ndarray:
    """(n_branches, T) metric values; NaN marks undefined timesteps."""
    horizon = next(iter(p_by_branch.values())).shape[0]
    vals = np.empty((len(branches), horizon))
    for k, br in enumerate(branches):
        for t in range(horizon):
            try:
                if metric == "iu":
                    vals[k, t] = metrics.i_u(i_by_branch[br.key][t])
                elif metric == "pu":
                    vals[k, t] = metrics.p_u(p_by_branch[br.key][t])
                else:
                    vals[k, t] = metrics.p_u_star(
                        p_by_branch[br.key][t],
                        branch_denominator(feeder, loads, br))
            except MetricError:
                vals[k, t] = np.nan
    return vals


def metric_values_exact(spec: ObjectiveSpec, feeder: Feeder, loads: LoadSeries,
                        solutions) -> np.ndarray:
    """Per-location, per-timestep values of ``spec.metric`` from exact PF."""
    horizon = len(solutions)
    if spec.is_voltage_metric:
        buses = spec.buses_for(feeder)
        vals = np.empty((len(buses), horizon))
        for k, bus in enumerate(buses):
            b = feeder.bus_index(bus)
            for t, sol in enumerate(solutions):
                mags = sol.u_mag()[b]
                vals[k, t] = (metrics.pvur(mags) if spec.metric == "pvur"
                              else metrics.pvur_star(mags ** 2))
        return vals
    branches = spec.branches_for(feeder)
    p_by_branch = {}
    i_by_branch = {}
    for br in branches:
        p_by_branch[br.key] = np.stack(
            [np.real(sol.flows[br.key][0]) for sol in solutions])
        if spec.metric == "iu":
            i_by_branch[br.key] = np.stack(
                [np.abs(sol.branch_current(feeder, br)) for sol in solutions])
    return _flow_metric_values(spec.metric, feeder, loads, branches,
                               p_by_branch, i_by_branch)


def metric_values_ld3f(spec: ObjectiveSpec, feeder: Feeder, loads: LoadSeries,
                       state: lindist.Ld3fState) -> np.ndarray:
    if spec.metric == "iu":
        raise ValidationError("the linear model carries no currents; "
                              "i_u needs the exact evaluator")
    horizon = state.omega.shape[0]
    if spec.is_voltage_metric:
        buses = spec.buses_for(feeder)
        vals = np.empty((len(buses), horizon))
        for k, bus in enumerate(buses):
            b = feeder.bus_index(bus)
            for t in range(horizon):
                w = state.omega[t, b]
                if spec.metric == "pvur_star":
                    vals[k, t] = metrics.pvur_star(w)
                else:
                    if np.any(w <= 0.0):
                        raise MetricError(f"omega not positive at bus {bus}")
                    vals[k, t] = metrics.pvur(np.sqrt(w))
        return vals
    branches = spec.branches_for(feeder)
    p_by_branch = {br.key: state.flow_p[br.key] for br in branches}
    return _flow_metric_values(spec.metric, feeder, loads, branches,
                               p_by_branch, {})


@dataclass(frozen=True)
class Evaluation:
    objective: float
    operational_ok: bool
    violations: tuple[str, ...] = ()


def check_operational(feeder: Feeder, constraints: ConstraintConfig,
                      solutions) -> tuple[str, ...]:
    """Voltage band, thermal limits and convergence over a solved series."""
    violations = []
    ref = feeder.bus_index(feeder.reference_bus)
    for t, sol in enumerate(solutions):
        if not sol.converged:
            violations.append(f"t={t}: power flow did not converge")
            continue
        mags = sol.u_mag()
        for b, bus in enumerate(feeder.buses):
            if b == ref:
                continue
            lo, hi = mags[b].min(), mags[b].max()
            if lo < constraints.v_min or hi > constraints.v_max:
                violations.append(
                    f"t={t}: bus {bus} voltage [{lo:.4f}, {hi:.4f}] outside "
                    f"[{constraints.v_min}, {constraints.v_max}] pu")
        for br in feeder.branches:
            if br.power_limit_va is not None:
                s_lim = br.power_limit_va / feeder.base_power
                s_mag = np.abs(sol.flows[br.key][0])
                if np.any(s_mag > s_lim):
                    violations.append(
                        f"t={t}: branch {br.key} apparent power {s_mag.max():.4f} pu "
                        f"exceeds {s_lim:.4f} pu")
            if br.ampacity_a is not None:
                i_lim = br.ampacity_a / feeder.i_base
                i_mag = np.abs(sol.branch_current(feeder, br))
                if np.any(i_mag > i_lim):
                    violations.append(
                        f"t={t}: branch {br.key} current {i_mag.max():.4f} pu "
                        f"exceeds {i_lim:.4f} pu")
    return tuple(violations)


def evaluate_exact(problem: Problem, assignment: PhaseAssignment) -> Evaluation:
    """Exact-PF objective plus operational feasibility of a configuration."""
    try:
        sols = powerflow.solve_series(problem.feeder, assignment, problem.loads,
                                      tol=problem.pf_tol,
                                      max_iter=problem.pf_max_iter)
    except ConvergenceError as exc:
        return Evaluation(objective=np.inf, operational_ok=False,
                          violations=(str(exc),))
    violations = check_operational(problem.feeder, problem.constraints, sols)
    value = metrics.aggregate(
        problem.objective,
        metric_values_exact(problem.objective, problem.feeder, problem.loads, sols))
    return Evaluation(objective=value, operational_ok=not violations,
                      violations=violations)


def evaluate_ld3f(problem: Problem, assignment: PhaseAssignment) -> float:
    """Objective under the lossless linear model (no operational checks)."""
    state = lindist.evaluate_series(problem.feeder, assignment, problem.loads)
    return metrics.aggregate(
        problem.objective,
        metric_values_ld3f(problem.objective, problem.feeder, problem.loads, state))


def evaluate(problem: Problem, assignment: PhaseAssignment,
             evaluator: str = "exact") -> float:
    if evaluator == "exact":
        return evaluate_exact(problem, assignment).objective
    if evaluator == "ld3f":
        return evaluate_ld3f(problem, assignment)
    raise ValidationError(f"unknown evaluator {evaluator!r}; pick from {EVALUATORS}")


def is_feasible(problem: Problem, assignment: PhaseAssignment) -> bool:
    return binary_feasible(problem.feeder, assignment, problem.constraints)
