"""Exhaustive search over feasible phase configurations.

Ground truth for the optimizers at desk scale: every configuration that
satisfies the switch budget (and, when enforced, the per-phase count
bounds) is scored with the chosen evaluator and the full ranking is
returned.  Enumeration follows lexicographic order over the integer
configuration; candidates beyond the budget are pruned during the
depth-first walk, so the work is proportional to the feasible count
rather than 3^n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import comb

from .errors import CapExceededError
from .network import PhaseAssignment, original_assignment, phase_user_counts
from .problem import Problem, evaluate

DEFAULT_CAP = 10 ** 6


def feasible_count_bound(n_genes: int, delta_max: int) -> int:
    """Upper bound on the number of budget-feasible configurations."""
    return sum(comb(n_genes, k) * 2 ** k for k in range(min(delta_max, n_genes) + 1))


def iter_feasible(problem: Problem):
    """Yield feasible configurations in lexicographic order."""
    c0 = original_assignment(problem.feeder).phases
    n = len(c0)
    budget = problem.constraints.delta_max
    prefix = [0] * n

    def walk(pos: int, used: int):
        if pos == n:
            yield tuple(prefix)
            return
        for phase in (1, 2, 3):
            cost = used + (phase != c0[pos])
            if cost > budget:
                continue
            prefix[pos] = phase
            yield from walk(pos + 1, cost)

    for c in walk(0, 0):
        a = PhaseAssignment(c)
        if problem.constraints.enforce_phase_counts:
            counts = phase_user_counts(problem.feeder, a)
            lo, hi = problem.constraints.gamma_low, problem.constraints.gamma_upp
            if not all(lo <= k <= hi for k in counts):
                continue
        yield a


@dataclass(frozen=True)
class OracleResult:
    best: PhaseAssignment
    objective: float
    ranking: tuple  # (objective, PhaseAssignment), best first, stable ties
    evaluated: int


def enumerate_optimal(problem: Problem, evaluator: str = "exact",
                      cap: int = DEFAULT_CAP) -> OracleResult:
    """Score every feasible configuration; return the minimum and ranking."""
    n = len(original_assignment(problem.feeder))
    bound = feasible_count_bound(n, problem.constraints.delta_max)
    if bound > cap:
        raise CapExceededError(
            f"up to {bound} feasible configurations exceeds the cap {cap}; "
            f"lower delta_max or the number of reconfigurable users")
    scored = []
    for a in iter_feasible(problem):
        scored.append((evaluate(problem, a, evaluator), a))
    scored.sort(key=lambda pair: pair[0])  # stable: lexicographic ties keep order
    best_obj, best = scored[0]
    return OracleResult(best=best, objective=best_obj, ranking=tuple(scored),
                        evaluated=len(scored))


def write_ranking_csv(result: OracleResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "objective", "configuration"])
        for rank, (obj, a) in enumerate(result.ranking, start=1):
            writer.writerow([rank, repr(obj), " ".join(map(str, a.phases))])
