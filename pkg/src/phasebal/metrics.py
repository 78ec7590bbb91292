"""Imbalance metrics, spatial aggregation and time averaging.

Voltage metrics (PVUR and its squared-magnitude proxy) are evaluated at a
set of balance buses and aggregated with the worst bus per timestep; flow
metrics (I_U, P_U and the quadratic proxy) are evaluated at a set of
balance branches and averaged over them.  The time axis is always reduced
by the mean.  All metrics return percent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MetricError, ValidationError
from .network import Feeder, LoadSeries, downstream_users

VOLTAGE_METRICS = ("pvur", "pvur_star")
FLOW_METRICS = ("iu", "pu", "pu_star")
ALL_METRICS = VOLTAGE_METRICS + FLOW_METRICS

# timesteps whose phase-mean flow is closer to zero than this are skipped
# by the flow-metric aggregation (reverse flows can cancel the mean)
ZERO_MEAN_PU = 1e-6


def pvur(u_mags) -> float:
    """Phase voltage unbalance rate: worst relative deviation from the mean."""
    m = np.asarray(u_mags, dtype=float)
    if np.any(m <= 0.0):
        raise MetricError(f"pvur needs positive magnitudes, got {m}")
    mean = m.mean()
    return float(np.max(np.abs(1.0 - m / mean)) * 100.0)


def pvur_star(omega) -> float:
    """Proxy on squared magnitudes; unit-mean normalization dropped."""
    w = np.asarray(omega, dtype=float)
    return float(np.max(np.abs(w - w.mean())) * 100.0)


def _unbalance_rate(values, what: str) -> float:
    v = np.asarray(values, dtype=float)
    mean = v.mean()
    if abs(mean) < ZERO_MEAN_PU:
        raise MetricError(f"{what} undefined: phase mean {mean:g} is (near) zero")
    return float(np.max(np.abs(1.0 - v / mean)) * 100.0)


def i_u(i_mags) -> float:
    """Current unbalance rate over per-phase current magnitudes."""
    return _unbalance_rate(i_mags, "i_u")


def p_u(p_flows) -> float:
    """Power unbalance rate over per-phase active flows (signed)."""
    return _unbalance_rate(p_flows, "p_u")


def p_u_star(p_flows, denom: float) -> float:
    """Quadratic cyclic-difference proxy, normalized by the estimated
    per-phase mean flow ``denom``."""
    if denom <= 0.0:
        raise MetricError(f"p_u_star needs a positive denominator, got {denom}")
    p = np.asarray(p_flows, dtype=float)
    diffs = p - np.roll(p, -1)  # pairs (1,2), (2,3), (3,1)
    return float(np.sum(diffs ** 2) / denom ** 2 * 100.0)


def denominator(feeder: Feeder, loads: LoadSeries, branch) -> float:
    """Estimated mean active flow per phase at a branch: one third of the
    summed time-mean downstream demand, per-unit."""
    users = downstream_users(feeder, branch)
    if not users:
        raise MetricError(f"branch {branch.key} has no downstream users")
    total = 0.0
    for uid in users:
        total += float(loads.p[:, loads.column(uid)].mean())
    total /= feeder.base_power
    if total <= 0.0:
        raise MetricError(f"branch {branch.key}: zero downstream demand")
    return total / 3.0


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which metric to minimize and where it is measured.

    balance_buses defaults to the user buses, balance_branches to the
    branches leaving the reference bus.
    """

    metric: str
    balance_buses: tuple | None = None
    balance_branches: tuple | None = None

    def __post_init__(self):
        if self.metric not in ALL_METRICS:
            raise ValidationError(
                f"unknown metric {self.metric!r}; pick one of {ALL_METRICS}")
        if self.balance_buses is not None:
            object.__setattr__(self, "balance_buses", tuple(self.balance_buses))
        if self.balance_branches is not None:
            object.__setattr__(self, "balance_branches",
                               tuple(tuple(k) for k in self.balance_branches))

    @property
    def is_voltage_metric(self) -> bool:
        return self.metric in VOLTAGE_METRICS

    def buses_for(self, feeder: Feeder) -> tuple[str, ...]:
        if self.balance_buses is not None:
            if not self.balance_buses:
                raise ValidationError("balance bus set is empty")
            return self.balance_buses
        buses = tuple(dict.fromkeys(u.bus for u in feeder.users))
        if not buses:
            raise ValidationError("feeder has no users to balance at")
        return buses

    def branches_for(self, feeder: Feeder) -> tuple:
        if self.balance_branches is not None:
            if not self.balance_branches:
                raise ValidationError("balance branch set is empty")
            return tuple(feeder.branch(*k) for k in self.balance_branches)
        return feeder.reference_branches()


def aggregate(spec: ObjectiveSpec, values: np.ndarray) -> float:
    """Reduce per-location, per-timestep metric values to the scalar objective.

    values has shape (n_locations, T).  Voltage metrics take the worst
    location per timestep, flow metrics the location mean; both then
    average over time.  NaN marks a timestep skipped at that location
    (near-zero mean flow); a column with any NaN is dropped from the time
    mean with a warning.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2 or vals.shape[0] == 0 or vals.shape[1] == 0:
        raise ValidationError(f"aggregate needs (locations, T) values, got {vals.shape}")
    keep = ~np.any(np.isnan(vals), axis=0)
    if not np.all(keep):
        warnings.warn(
            f"skipping {int((~keep).sum())} of {vals.shape[1]} timesteps with "
            f"undefined flow metric (near-zero phase mean)", stacklevel=2)
        vals = vals[:, keep]
        if vals.shape[1] == 0:
            raise MetricError("metric undefined at every timestep")
    per_t = vals.max(axis=0) if spec.is_voltage_metric else vals.mean(axis=0)
    return float(per_t.mean())
