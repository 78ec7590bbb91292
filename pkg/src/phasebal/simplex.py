"""Dense two-phase tableau simplex for small LP relaxations.

Solves  min c.x  s.t.  a_ub.x <= b_ub,  a_eq.x = b_eq,  x >= 0.

Phase 1 drives artificial variables out with the usual auxiliary
objective; redundant equality rows left with a zero-level artificial are
dropped.  Pivoting is Dantzig's rule with a switch to Bland's rule after
a run of degenerate steps, which rules out cycling.  Everything is dense
numpy; the LPs this package builds stay in the hundreds of rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TOL = 1e-9
_DEGENERATE_SWITCH = 40


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float | None
    iterations: int


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    tab[:, col] = 0.0
    tab[row, col] = 1.0
    basis[row] = col


def _ratio_row(tab: np.ndarray, basis: np.ndarray, col: int,
               bland: bool) -> int | None:
    positive = tab[:, col] > _TOL
    if not np.any(positive):
        return None
    ratios = np.full(tab.shape[0], np.inf)
    ratios[positive] = tab[positive, -1] / tab[positive, col]
    best = ratios.min()
    candidates = np.flatnonzero(ratios <= best + _TOL)
    if bland:
        # anti-cycling: among ties, evict the lowest-index basic variable
        return int(candidates[np.argmin(basis[candidates])])
    # otherwise prefer the largest pivot element (stability, fewer stalls)
    return int(candidates[np.argmax(tab[candidates, col])])


def _iterate(tab: np.ndarray, basis: np.ndarray, costs: np.ndarray,
             allowed: np.ndarray, max_iter: int) -> tuple[str, int]:
    """Run simplex pivots until optimal/unbounded; returns (status, iters)."""
    iters = 0
    degenerate_run = 0
    while iters < max_iter:
        reduced = costs - costs[basis] @ tab[:, :-1]
        reduced[~allowed] = 0.0
        if np.all(reduced >= -_TOL):
            return "optimal", iters
        bland = degenerate_run >= _DEGENERATE_SWITCH
        if bland:  # Bland: first improving column, guarantees termination
            col = int(np.flatnonzero(reduced < -_TOL)[0])
        else:
            col = int(np.argmin(reduced))
        row = _ratio_row(tab, basis, col, bland)
        if row is None:
            return "unbounded", iters
        step = tab[row, -1] / tab[row, col]
        degenerate_run = degenerate_run + 1 if step <= _TOL else 0
        _pivot(tab, basis, row, col)
        iters += 1
    return "iteration_limit", iters


def solve_lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None,
             max_iter: int | None = None) -> LpResult:
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq
    if max_iter is None:
        max_iter = 200 + 40 * (m + n)

    a = np.vstack([a_ub, a_eq]) if m else np.zeros((0, n))
    b = np.concatenate([b_ub, b_eq])
    slack = np.zeros((m, m_ub))
    slack[:m_ub, :] = np.eye(m_ub)
    flip = b < 0
    a[flip] *= -1.0
    b = np.abs(b)
    slack[flip] *= -1.0

    # artificials wherever the slack column cannot start basic
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = flip[:m_ub]
    art_rows = np.flatnonzero(needs_art)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for k, r in enumerate(art_rows):
        art[r, k] = 1.0

    tab = np.hstack([a, slack, art, b[:, None]])
    total = n + m_ub + n_art
    basis = np.empty(m, dtype=int)
    basis[:m_ub] = n + np.arange(m_ub)
    for k, r in enumerate(art_rows):
        basis[r] = n + m_ub + k

    allowed = np.ones(total, dtype=bool)
    iterations = 0
    if n_art:
        phase1 = np.zeros(total)
        phase1[n + m_ub:] = 1.0
        status, it = _iterate(tab, basis, phase1, allowed, max_iter)
        iterations += it
        if status == "iteration_limit":
            return LpResult(status, None, None, iterations)
        if float(phase1[basis] @ tab[:, -1]) > 1e-7:
            return LpResult("infeasible", None, None, iterations)
        # pivot lingering zero-level artificials out, or drop their rows
        drop = []
        for r in range(m):
            if basis[r] < n + m_ub:
                continue
            entry = np.flatnonzero(np.abs(tab[r, : n + m_ub]) > _TOL)
            if len(entry):
                _pivot(tab, basis, r, int(entry[0]))
                iterations += 1
            else:
                drop.append(r)
        if drop:
            keep = np.setdiff1d(np.arange(m), drop)
            tab = tab[keep]
            basis = basis[keep]
        allowed[n + m_ub:] = False

    costs = np.zeros(total)
    costs[:n] = c
    status, it = _iterate(tab, basis, costs, allowed, max_iter - iterations)
    iterations += it
    if status != "optimal":
        return LpResult(status, None, None, iterations)
    x = np.zeros(total)
    x[basis] = tab[:, -1]
    x = x[:n]
    return LpResult("optimal", x, float(c @ x), iterations)
