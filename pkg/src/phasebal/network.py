"""Feeder data model, file ingestion and topology queries.

A feeder is a radial three-wire LV network: buses, directed branches with
3x3 series impedance matrices, a reference bus at the transformer, and
single-phase users attached to buses.  Phase choices of the reconfigurable
users are represented either as an integer list ``c`` (one entry per
reconfigurable user, values in {1,2,3}) or as a one-hot 0/1 matrix
``delta`` with one row per user; the two views round-trip exactly.

Impedances are stored in ohms and converted to per-unit on
(base_voltage, base_power), where base_voltage is line-to-neutral volts
and base_power is the per-phase VA base.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputParseError, ValidationError

PHASES = (1, 2, 3)


def _as_z_matrix(rows, what):
    m = np.asarray(rows, dtype=float)
    if m.shape != (3, 3):
        raise ValidationError(f"{what}: expected a 3x3 matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class Branch:
    """Directed branch with 3x3 series impedance Z = R + jX in ohms."""

    from_bus: str
    to_bus: str
    r: np.ndarray
    x: np.ndarray
    ampacity_a: float | None = None
    power_limit_va: float | None = None

    def __post_init__(self):
        r = _as_z_matrix(self.r, f"branch {self.from_bus}->{self.to_bus} R")
        x = _as_z_matrix(self.x, f"branch {self.from_bus}->{self.to_bus} X")
        r.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x", x)
        name = self.key
        if not np.allclose(r, r.T) or not np.allclose(x, x.T):
            raise ValidationError(f"branch {name}: R and X must be symmetric")
        if np.any(np.diag(r) <= 0.0):
            raise ValidationError(f"branch {name}: diagonal of R must be strictly positive")
        z = r + 1j * x
        if abs(np.linalg.det(z)) < 1e-15 * max(1.0, np.abs(z).max() ** 3):
            raise ValidationError(f"branch {name}: singular impedance matrix")

    @property
    def key(self) -> tuple[str, str]:
        return (self.from_bus, self.to_bus)

    def z_ohm(self) -> np.ndarray:
        return self.r + 1j * self.x

    def reversed(self) -> "Branch":
        return Branch(self.to_bus, self.from_bus, self.r, self.x,
                      self.ampacity_a, self.power_limit_va)


@dataclass(frozen=True)
class User:
    id: str
    bus: str
    original_phase: int
    reconfigurable: bool = True

    def __post_init__(self):
        if self.original_phase not in PHASES:
            raise ValidationError(
                f"user {self.id}: phase must be in {PHASES}, got {self.original_phase}")


@dataclass(frozen=True, eq=False)
class Feeder:
    """Validated radial feeder. Immutable; safe to share across workers."""

    buses: tuple[str, ...]
    branches: tuple[Branch, ...]
    reference_bus: str
    users: tuple[User, ...]
    base_voltage: float  # line-to-neutral volts
    base_power: float    # per-phase VA

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(str(b) for b in self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "users", tuple(self.users))
        if self.base_voltage <= 0 or self.base_power <= 0:
            raise ValidationError("base_voltage and base_power must be positive")
        if len(set(self.buses)) != len(self.buses):
            raise ValidationError("duplicate bus ids")
        bus_set = set(self.buses)
        if self.reference_bus not in bus_set:
            raise ValidationError(f"reference bus {self.reference_bus!r} not in bus list")
        if len(self.branches) != len(self.buses) - 1:
            raise ValidationError(
                f"non-radial: {len(self.branches)} branches for {len(self.buses)} buses "
                f"(need exactly |buses|-1)")
        for br in self.branches:
            for end in br.key:
                if end not in bus_set:
                    raise ValidationError(f"branch {br.key}: unknown bus {end!r}")
        seen_users = set()
        for u in self.users:
            if u.bus not in bus_set:
                raise ValidationError(f"user {u.id}: unknown bus {u.bus!r}")
            if u.id in seen_users:
                raise ValidationError(f"duplicate user id {u.id!r}")
            seen_users.add(u.id)
        # connectivity + orientation away from the reference
        children: dict[str, list] = {b: [] for b in self.buses}
        for br in self.branches:
            children[br.from_bus].append(br)
        parent: dict[str, Branch] = {}
        order: list[Branch] = []
        stack = [self.reference_bus]
        visited = {self.reference_bus}
        while stack:
            bus = stack.pop()
            for br in children[bus]:
                if br.to_bus in visited:
                    raise ValidationError(f"non-radial: bus {br.to_bus!r} reached twice")
                visited.add(br.to_bus)
                parent[br.to_bus] = br
                order.append(br)
                stack.append(br.to_bus)
        if visited != bus_set:
            missing = sorted(bus_set - visited)
            raise ValidationError(
                f"non-radial: buses {missing} unreachable from the reference "
                f"(are all branches directed away from it?)")
        object.__setattr__(self, "_parent", parent)
        object.__setattr__(self, "_topo_branches", tuple(order))
        object.__setattr__(self, "_bus_index", {b: i for i, b in enumerate(self.buses)})
        object.__setattr__(
            self, "_branch_by_key", {br.key: br for br in self.branches})

    # -- bases -------------------------------------------------------------

    @property
    def z_base(self) -> float:
        return self.base_voltage ** 2 / self.base_power

    @property
    def i_base(self) -> float:
        return self.base_power / self.base_voltage

    def z_pu(self, branch: Branch) -> np.ndarray:
        return branch.z_ohm() / self.z_base

    # -- lookups -----------------------------------------------------------

    def bus_index(self, bus: str) -> int:
        return self._bus_index[bus]

    def branch(self, from_bus: str, to_bus: str) -> Branch:
        try:
            return self._branch_by_key[(from_bus, to_bus)]
        except KeyError:
            raise ValidationError(f"unknown branch ({from_bus!r}, {to_bus!r})") from None

    def parent_branch(self, bus: str) -> Branch | None:
        return self._parent.get(bus)

    def topo_branches(self) -> tuple[Branch, ...]:
        """Branches ordered root-first (every parent before its children)."""
        return self._topo_branches

    def path_from_reference(self, bus: str) -> tuple[Branch, ...]:
        path = []
        while bus != self.reference_bus:
            br = self._parent[bus]
            path.append(br)
            bus = br.from_bus
        return tuple(reversed(path))

    def users_at(self, bus: str) -> tuple[User, ...]:
        return tuple(u for u in self.users if u.bus == bus)

    def reconfigurable_users(self) -> tuple[User, ...]:
        """Reconfigurable users in canonical (id-sorted) order.

        This ordering defines the gene order of integer configurations,
        the row order of one-hot matrices and the variable order of
        exported programs.
        """
        return tuple(sorted((u for u in self.users if u.reconfigurable),
                            key=lambda u: u.id))

    def reference_branches(self) -> tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.from_bus == self.reference_bus)


def _users_downstream(feeder: Feeder, branch: Branch) -> frozenset[str]:
    reachable = {branch.to_bus}
    for br in feeder.topo_branches():
        if br.from_bus in reachable:
            reachable.add(br.to_bus)
    return frozenset(u.id for u in feeder.users if u.bus in reachable)


@lru_cache(maxsize=None)
def _downstream_table(feeder: Feeder) -> dict[tuple[str, str], frozenset[str]]:
    return {br.key: _users_downstream(feeder, br) for br in feeder.branches}


def downstream_users(feeder: Feeder, branch: Branch) -> frozenset[str]:
    """Ids of users whose path from the reference runs through ``branch``."""
    table = _downstream_table(feeder)
    try:
        return table[branch.key]
    except KeyError:
        raise ValidationError(f"unknown branch {branch.key}") from None


# -- phase assignments -----------------------------------------------------


@dataclass(frozen=True)
class PhaseAssignment:
    """Phases of the reconfigurable users, in canonical user order."""

    phases: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(int(p) for p in self.phases))
        for p in self.phases:
            if p not in PHASES:
                raise ValidationError(f"phase {p} not in {PHASES}")

    def __len__(self):
        return len(self.phases)

    def to_delta(self) -> np.ndarray:
        """One-hot (n_users, 3) 0/1 matrix; row i has a 1 at phases[i]-1."""
        delta = np.zeros((len(self.phases), 3), dtype=np.int8)
        for i, p in enumerate(self.phases):
            delta[i, p - 1] = 1
        return delta

    @classmethod
    def from_delta(cls, delta) -> "PhaseAssignment":
        delta = np.asarray(delta)
        if delta.ndim != 2 or delta.shape[1] != 3:
            raise ValidationError(f"delta must be (n, 3), got {delta.shape}")
        if not np.all(delta.sum(axis=1) == 1) or not np.all((delta == 0) | (delta == 1)):
            raise ValidationError("each delta row must be one-hot")
        return cls(tuple(int(np.argmax(row)) + 1 for row in delta))


def original_assignment(feeder: Feeder) -> PhaseAssignment:
    return PhaseAssignment(tuple(u.original_phase for u in feeder.reconfigurable_users()))


def switch_count(a: PhaseAssignment, a0: PhaseAssignment) -> int:
    """Number of users whose phase differs between the two assignments."""
    if len(a) != len(a0):
        raise ValidationError(
            f"assignment length mismatch: {len(a)} vs {len(a0)}")
    return sum(1 for p, p0 in zip(a.phases, a0.phases) if p != p0)


def user_phases(feeder: Feeder, assignment: PhaseAssignment) -> dict[str, int]:
    """Phase of every user under ``assignment`` (fixed users keep their own)."""
    pr = feeder.reconfigurable_users()
    if len(assignment) != len(pr):
        raise ValidationError(
            f"assignment has {len(assignment)} entries for {len(pr)} reconfigurable users")
    phases = {u.id: u.original_phase for u in feeder.users}
    for u, p in zip(pr, assignment.phases):
        phases[u.id] = p
    return phases


def phase_user_counts(feeder: Feeder, assignment: PhaseAssignment) -> tuple[int, int, int]:
    counts = [0, 0, 0]
    for p in user_phases(feeder, assignment).values():
        counts[p - 1] += 1
    return tuple(counts)


# -- load series -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Per-user demand time series in SI units (W / var), shape (T, n_users)."""

    user_ids: tuple[str, ...]
    p: np.ndarray
    q: np.ndarray
    resolution_s: float = 900.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 2 or p.shape[1] != len(self.user_ids):
            raise ValidationError(
                f"load series shape mismatch: p {p.shape}, q {q.shape}, "
                f"{len(self.user_ids)} users")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValidationError("load series contains missing or non-finite values")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "_col", {u: i for i, u in enumerate(self.user_ids)})

    @property
    def horizon(self) -> int:
        return self.p.shape[0]

    def column(self, user_id: str) -> int:
        try:
            return self._col[user_id]
        except KeyError:
            raise ValidationError(f"no load series for user {user_id!r}") from None

    def slice_window(self, start: int, stop: int) -> "LoadSeries":
        return LoadSeries(self.user_ids, self.p[start:stop], self.q[start:stop],
                          self.resolution_s)


# -- injections ------------------------------------------------------------


def injections(feeder: Feeder, assignment: PhaseAssignment, loads: LoadSeries,
               t: int) -> np.ndarray:
    """Complex per-bus, per-phase load injections at timestep t, in watts.

    Rows follow feeder.buses order; passive buses get the zero vector.
    """
    if t < 0 or t >= loads.horizon:
        raise ValidationError(f"timestep {t} outside horizon {loads.horizon}")
    return injection_series(feeder, assignment, loads)[t]


def injection_series(feeder: Feeder, assignment: PhaseAssignment,
                     loads: LoadSeries) -> np.ndarray:
    """Complex (T, n_buses, 3) injections in watts for every timestep."""
    phases = user_phases(feeder, assignment)
    out = np.zeros((loads.horizon, len(feeder.buses), 3), dtype=complex)
    for u in feeder.users:
        col = loads.column(u.id)
        b = feeder.bus_index(u.bus)
        ph = phases[u.id] - 1
        out[:, b, ph] += loads.p[:, col] + 1j * loads.q[:, col]
    return out


# -- constraint configuration ----------------------------------------------


@dataclass(frozen=True)
class ConstraintConfig:
    """Planning constraints: switch budget, per-phase counts, voltage band."""

    delta_max: int
    gamma_low: int = 0
    gamma_upp: int = 10 ** 9
    v_min: float = 0.90
    v_max: float = 1.10
    enforce_phase_counts: bool = False

    def __post_init__(self):
        if self.delta_max < 0:
            raise ValidationError("delta_max must be >= 0")
        if not (0 <= self.gamma_low <= self.gamma_upp):
            raise ValidationError("need 0 <= gamma_low <= gamma_upp")
        if not (0 < self.v_min < self.v_max):
            raise ValidationError("need 0 < v_min < v_max")

    @classmethod
    def from_fractions(cls, feeder: Feeder, delta_max: int,
                       low: float = 0.20, upp: float = 0.40,
                       v_min: float = 0.90, v_max: float = 1.10,
                       enforce_phase_counts: bool = False) -> "ConstraintConfig":
        n = len(feeder.users)
        return cls(delta_max=delta_max,
                   gamma_low=math.floor(low * n),
                   gamma_upp=math.ceil(upp * n),
                   v_min=v_min, v_max=v_max,
                   enforce_phase_counts=enforce_phase_counts)


def binary_feasible(feeder: Feeder, assignment: PhaseAssignment,
                    constraints: ConstraintConfig,
                    a0: PhaseAssignment | None = None) -> bool:
    """Check the switch budget and (optionally) per-phase user counts."""
    if a0 is None:
        a0 = original_assignment(feeder)
    if switch_count(assignment, a0) > constraints.delta_max:
        return False
    if constraints.enforce_phase_counts:
        counts = phase_user_counts(feeder, assignment)
        for c in counts:
            if not (constraints.gamma_low <= c <= constraints.gamma_upp):
                return False
    return True


# -- file ingestion ----------------------------------------------------------


def make_feeder(buses, branches, reference_bus, users, base_voltage,
                base_power) -> Feeder:
    """Build a Feeder, flipping any branch that points toward the reference."""
    reference_bus = str(reference_bus)
    adjacency: dict[str, list[Branch]] = {str(b): [] for b in buses}
    for br in branches:
        if br.from_bus not in adjacency or br.to_bus not in adjacency:
            raise ValidationError(f"branch {br.key}: unknown bus")
        adjacency[br.from_bus].append(br)
        adjacency[br.to_bus].append(br)
    oriented: list[Branch] = []
    visited = {reference_bus}
    stack = [reference_bus]
    while stack:
        bus = stack.pop()
        for br in adjacency[bus]:
            other = br.to_bus if br.from_bus == bus else br.from_bus
            if other in visited:
                continue
            visited.add(other)
            oriented.append(br if br.from_bus == bus else br.reversed())
            stack.append(other)
    if len(oriented) != len(branches):
        # cycle or disconnection; let Feeder validation produce the message
        oriented = list(branches)
    return Feeder(tuple(buses), tuple(oriented), reference_bus, tuple(users),
                  base_voltage, base_power)


def load_feeder(path) -> Feeder:
    """Read and validate a feeder description from a JSON file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputParseError(f"cannot parse feeder file {path}: {exc}") from exc
    try:
        buses = [str(b) for b in raw["buses"]]
        branches = []
        for spec in raw["branches"]:
            branches.append(Branch(
                from_bus=str(spec["from"]),
                to_bus=str(spec["to"]),
                r=spec["R"],
                x=spec["X"],
                ampacity_a=spec.get("ampacity_A"),
                power_limit_va=spec.get("power_limit_VA"),
            ))
        users = []
        for spec in raw["users"]:
            users.append(User(
                id=str(spec["id"]),
                bus=str(spec["bus"]),
                original_phase=int(spec["phase"]),
                reconfigurable=bool(spec.get("reconfigurable", True)),
            ))
        return make_feeder(
            buses=buses,
            branches=branches,
            reference_bus=raw["reference_bus"],
            users=users,
            base_voltage=float(raw["base_voltage_V"]),
            base_power=float(raw["base_power_VA"]),
        )
    except KeyError as exc:
        raise InputParseError(f"feeder file {path}: missing field {exc}") from exc


def feeder_to_dict(feeder: Feeder) -> dict:
    return {
        "base_voltage_V": feeder.base_voltage,
        "base_power_VA": feeder.base_power,
        "reference_bus": feeder.reference_bus,
        "buses": list(feeder.buses),
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "R": br.r.tolist(),
                "X": br.x.tolist(),
                **({"ampacity_A": br.ampacity_a} if br.ampacity_a is not None else {}),
                **({"power_limit_VA": br.power_limit_va}
                   if br.power_limit_va is not None else {}),
            }
            for br in feeder.branches
        ],
        "users": [
            {"id": u.id, "bus": u.bus, "phase": u.original_phase,
             "reconfigurable": u.reconfigurable}
            for u in feeder.users
        ],
    }


def save_feeder(feeder: Feeder, path) -> None:
    with open(path, "w") as fh:
        json.dump(feeder_to_dict(feeder), fh, indent=1, sort_keys=True)


def load_profiles(path, feeder: Feeder, power_factor: float = 0.95,
                  resolution_s: float = 900.0) -> LoadSeries:
    """Read per-user demand profiles from CSV.

    Expected header: ``t,<user>:p[,<user>:q]...`` with W / var values.
    Users without a q column get q = p * tan(acos(power_factor)).
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputParseError(f"cannot read profiles file {path}: {exc}") from exc
    if not rows:
        raise InputParseError(f"profiles file {path} is empty")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise InputParseError(f"profiles file {path}: first column must be 't'")
    p_col: dict[str, int] = {}
    q_col: dict[str, int] = {}
    for idx, name in enumerate(header[1:], start=1):
        if ":" not in name:
            raise InputParseError(
                f"profiles file {path}: column {name!r} is not '<user>:p' or '<user>:q'")
        uid, kind = name.rsplit(":", 1)
        if kind == "p":
            p_col[uid] = idx
        elif kind == "q":
            q_col[uid] = idx
        else:
            raise InputParseError(f"profiles file {path}: unknown column kind {name!r}")
    user_ids = tuple(u.id for u in feeder.users)
    for uid in user_ids:
        if uid not in p_col:
            raise ValidationError(f"profiles file missing p column for user {uid!r}")
    width = len(header)
    data = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != width:
            raise ValidationError(
                f"profiles file {path}: line {ln} has {len(row)} fields, expected {width}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise InputParseError(f"profiles file {path}: line {ln}: {exc}") from exc
    if not data:
        raise ValidationError(f"profiles file {path} has a header but no rows")
    arr = np.array(data, dtype=float)
    tan_phi = math.tan(math.acos(power_factor))
    p = np.empty((arr.shape[0], len(user_ids)))
    q = np.empty_like(p)
    for j, uid in enumerate(user_ids):
        p[:, j] = arr[:, p_col[uid]]
        q[:, j] = arr[:, q_col[uid]] if uid in q_col else p[:, j] * tan_phi
    return LoadSeries(user_ids, p, q, resolution_s)


def save_profiles(loads: LoadSeries, path) -> None:
    header = ["t"]
    for uid in loads.user_ids:
        header += [f"{uid}:p", f"{uid}:q"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(loads.horizon):
            row = [t]
            for j in range(len(loads.user_ids)):
                row += [repr(float(loads.p[t, j])), repr(float(loads.q[t, j]))]
            writer.writerow(row)
