"""Exact three-wire unbalanced power flow by fixed-point current injection.

Voltages are per-unit, line-to-neutral, with the reference bus pinned to
the balanced set (1 at 0 deg, 1 at -120 deg, 1 at +120 deg).  Each
iteration converts the load powers into current injections at the present
voltages and solves the reduced nodal admittance system for the
non-reference voltages; convergence is declared when the infinity norm of
the per-(bus, phase) power mismatch drops below the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConvergenceError, MetricError, ValidationError
from .network import Branch, Feeder, LoadSeries, PhaseAssignment, injection_series

REFERENCE_PHASORS = np.array([1.0,
                              np.exp(-2j * np.pi / 3),
                              np.exp(+2j * np.pi / 3)])

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100

# |u| below this is treated as voltage collapse rather than a slow iterate
_COLLAPSE_PU = 0.05


def build_ybus(feeder: Feeder) -> np.ndarray:
    """Dense nodal admittance matrix over (bus, phase), per-unit.

    Index of (bus b, phase ph) is 3 * feeder.bus_index(b) + ph.
    """
    n = 3 * len(feeder.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in feeder.branches:
        yb = np.linalg.inv(feeder.z_pu(br))
        i = 3 * feeder.bus_index(br.from_bus)
        j = 3 * feeder.bus_index(br.to_bus)
        y[i:i + 3, i:i + 3] += yb
        y[j:j + 3, j:j + 3] += yb
        y[i:i + 3, j:j + 3] -= yb
        y[j:j + 3, i:i + 3] -= yb
    return y


class _FeederSolver:
    """Per-feeder factorization of the reduced Y-bus, shared read-only.

    The admittance structure does not depend on the phase assignment, so
    one LU factorization serves every candidate and timestep.
    """

    def __init__(self, feeder: Feeder):
        self.feeder = feeder
        self.y = build_ybus(feeder)
        r = 3 * feeder.bus_index(feeder.reference_bus)
        n = self.y.shape[0]
        self.ref_idx = np.arange(r, r + 3)
        self.other_idx = np.array([k for k in range(n) if k not in set(self.ref_idx)])
        self.y_nn = self.y[np.ix_(self.other_idx, self.other_idx)]
        self.y_ns = self.y[np.ix_(self.other_idx, self.ref_idx)]
        self.lu = lu_factor(self.y_nn)
        self.slack_rhs = self.y_ns @ REFERENCE_PHASORS
        self.u_flat = np.tile(REFERENCE_PHASORS, len(feeder.buses))
        self.y_branch = {br.key: np.linalg.inv(feeder.z_pu(br))
                         for br in feeder.branches}


@lru_cache(maxsize=None)
def _solver_for(feeder: Feeder) -> _FeederSolver:
    return _FeederSolver(feeder)


@dataclass(frozen=True, eq=False)
class PFSolution:
    """Converged (or flagged) state for one timestep, everything per-unit."""

    u: np.ndarray                 # (n_buses, 3) complex voltages
    flows: dict                   # branch key -> (s_from, s_to), complex 3-vectors
    converged: bool
    iterations: int
    max_mismatch: float

    def u_mag(self) -> np.ndarray:
        return np.abs(self.u)

    def omega(self) -> np.ndarray:
        return np.abs(self.u) ** 2

    def branch_current(self, feeder: Feeder, branch: Branch) -> np.ndarray:
        """Complex per-phase current from branch.from_bus to branch.to_bus."""
        yb = np.linalg.inv(feeder.z_pu(branch))
        ui = self.u[feeder.bus_index(branch.from_bus)]
        uj = self.u[feeder.bus_index(branch.to_bus)]
        return yb @ (ui - uj)


def _branch_flows(solver: _FeederSolver, u: np.ndarray) -> dict:
    feeder = solver.feeder
    flows = {}
    for br in feeder.branches:
        yb = solver.y_branch[br.key]
        ui = u[feeder.bus_index(br.from_bus)]
        uj = u[feeder.bus_index(br.to_bus)]
        i_fwd = yb @ (ui - uj)
        s_from = ui * np.conj(i_fwd)
        s_to = uj * np.conj(-i_fwd)
        flows[br.key] = (s_from, s_to)
    return flows


def solve_pf(feeder: Feeder, assignment: PhaseAssignment, loads: LoadSeries,
             t: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             start: np.ndarray | None = None) -> PFSolution:
    """Solve one timestep; returns a PFSolution (non-convergence is flagged)."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    s_bus = injection_series(feeder, assignment, loads)[t]
    return _solve_injections(feeder, s_bus, tol, max_iter, start)


def _solve_injections(feeder: Feeder, s_bus_w: np.ndarray, tol: float,
                      max_iter: int, start: np.ndarray | None = None) -> PFSolution:
    solver = _solver_for(feeder)
    # net injected power: loads consume, so the net injection is negative
    s_inj = -(s_bus_w.reshape(-1) / feeder.base_power)[solver.other_idx]
    u = (solver.u_flat.copy() if start is None
         else np.asarray(start, dtype=complex).reshape(-1).copy())
    u[solver.ref_idx] = REFERENCE_PHASORS
    un = u[solver.other_idx]
    converged = False
    iterations = 0
    mismatch = np.inf
    for iterations in range(1, max_iter + 1):
        if np.any(np.abs(un) < _COLLAPSE_PU):
            raise ConvergenceError(
                f"voltage collapsed below {_COLLAPSE_PU} pu after {iterations - 1} iterations")
        i_inj = np.conj(s_inj / un)
        un = lu_solve(solver.lu, i_inj - solver.slack_rhs)
        u[solver.other_idx] = un
        s_calc = un * np.conj(solver.y_nn @ un + solver.slack_rhs)
        mismatch = float(np.max(np.abs(s_calc - s_inj)))
        if mismatch <= tol:
            converged = True
            break
    u_mat = u.reshape(len(feeder.buses), 3)
    return PFSolution(u=u_mat, flows=_branch_flows(solver, u_mat),
                      converged=converged, iterations=iterations,
                      max_mismatch=mismatch)


def solve_series(feeder: Feeder, assignment: PhaseAssignment, loads: LoadSeries,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
                 ) -> list[PFSolution]:
    """Independent flat-start solves, one per timestep."""
    s_all = injection_series(feeder, assignment, loads)
    return [_solve_injections(feeder, s_all[t], tol, max_iter)
            for t in range(loads.horizon)]


def reference_injection(feeder: Feeder, sol: PFSolution) -> complex:
    """Total complex power flowing from the reference bus into the network."""
    total = 0j
    for br in feeder.reference_branches():
        total += np.sum(sol.flows[br.key][0])
    return total


def losses(sol: PFSolution, feeder: Feeder) -> float:
    """Series losses as a percentage of the active power entering at the
    reference bus."""
    if not sol.converged:
        raise ConvergenceError("losses require a converged solution")
    loss = 0.0
    for br in feeder.branches:
        s_from, s_to = sol.flows[br.key]
        loss += float(np.sum(np.real(s_from + s_to)))
    p_ref = float(np.real(reference_injection(feeder, sol)))
    if abs(p_ref) < 1e-12:
        if abs(loss) < 1e-12:
            return 0.0
        raise MetricError("loss fraction undefined: zero reference injection")
    return 100.0 * loss / p_ref
