"""Core value types and feasibility primitives for PEV fleet scheduling.

Everything downstream (per-user solvers, the coordinator, settlement) is built
on the types in this module.  Conventions used throughout the package:

* Loads and energies are kWh per slot; prices are $/MWh.  The kWh -> MWh
  conversion happens exactly once, inside the settlement module.
* A connection window is a boolean mask over the horizon, not an (arrival,
  departure) pair, so overnight sessions that wrap past midnight are
  representable on a single-day horizon.  For state-of-charge accounting the
  masked slots are walked in ascending horizon order.
* All value types are immutable after construction.  Vectors are stored as
  read-only numpy arrays; fleet updates build new snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

# Tolerances shared across the package: equality constraints on energy are
# checked to 1e-6 kWh, inequality constraints get 1e-9 slack.
ENERGY_TOL = 1e-6
SLACK_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """A vector does not match the horizon length it is used against."""


class InfeasibleInstanceError(ValueError):
    """No schedule can satisfy a user's constraint set."""


class MissingScheduleError(KeyError):
    """A fleet operation referenced a user without a schedule."""


def _freeze(values, dtype=float) -> np.ndarray:
    """Copy ``values`` into a read-only numpy array."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform daily slot grid.

    Attributes:
        horizon_slots: number of slots H in the day (default 24 hourly slots).
        slot_hours: duration of one slot in hours.
    """

    horizon_slots: int = 24
    slot_hours: float = 1.0

    def __post_init__(self):
        if self.horizon_slots < 1:
            raise ValueError(f"horizon_slots must be >= 1, got {self.horizon_slots}")
        if not self.slot_hours > 0:
            raise ValueError(f"slot_hours must be > 0, got {self.slot_hours}")

    def require_length(self, vec: np.ndarray, name: str) -> np.ndarray:
        """Return ``vec`` as a float array after checking it spans the horizon."""
        arr = np.asarray(vec, dtype=float)
        if arr.ndim != 1 or arr.shape[0] != self.horizon_slots:
            raise DimensionMismatchError(
                f"{name} must have length {self.horizon_slots}, got shape {arr.shape}"
            )
        return arr


@dataclass(frozen=True, eq=False)
class PevSpec:
    """Static description of one PEV and its charging session.

    Attributes:
        user_id: stable identifier, also the coordinator's sweep key.
        permissible_slots: boolean mask of slots where the PEV is plugged in.
        required_energy_kwh: energy that must be delivered over the session.
        max_power_kw: charger power limit (applies to both directions).
        capacity_kwh: battery capacity.
        soc_arrival_kwh: state of charge at the start of the session.
        v2g_enabled: whether discharging back to the grid is allowed.
        min_soc_fraction: floor on SOC as a fraction of capacity.
    """

    user_id: str
    permissible_slots: np.ndarray
    required_energy_kwh: float
    max_power_kw: float
    capacity_kwh: float
    soc_arrival_kwh: float
    v2g_enabled: bool = False
    min_soc_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(
            self, "permissible_slots", _freeze(self.permissible_slots, dtype=bool)
        )
        if self.max_power_kw <= 0:
            raise ValueError(f"{self.user_id}: max_power_kw must be > 0")
        if self.capacity_kwh <= 0:
            raise ValueError(f"{self.user_id}: capacity_kwh must be > 0")
        if not 0.0 <= self.min_soc_fraction < 1.0:
            raise ValueError(f"{self.user_id}: min_soc_fraction must be in [0, 1)")
        if not 0.0 <= self.soc_arrival_kwh <= self.capacity_kwh + SLACK_TOL:
            raise ValueError(
                f"{self.user_id}: soc_arrival_kwh {self.soc_arrival_kwh} outside "
                f"[0, {self.capacity_kwh}]"
            )
        if self.required_energy_kwh < 0:
            raise ValueError(f"{self.user_id}: required_energy_kwh must be >= 0")
        headroom = self.capacity_kwh - self.soc_arrival_kwh
        if self.required_energy_kwh > headroom + ENERGY_TOL:
            raise ValueError(
                f"{self.user_id}: required_energy_kwh {self.required_energy_kwh} "
                f"exceeds battery headroom {headroom}"
            )

    @property
    def min_soc_kwh(self) -> float:
        return self.min_soc_fraction * self.capacity_kwh

    @property
    def masked_slots(self) -> np.ndarray:
        """Indices of permissible slots in ascending horizon order."""
        return np.flatnonzero(self.permissible_slots)

    @property
    def arrival_slot(self) -> int | None:
        """Slot where the charging session begins.

        For a contiguous cyclic window this is the slot whose cyclic
        predecessor is outside the window (the plug-in slot, even when the
        window wraps past midnight).  For an always-connected PEV, or a mask
        with several disjoint runs, falls back to the first permissible slot.
        Returns None for an empty mask.
        """
        mask = self.permissible_slots
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            return None
        if mask.all():
            return 0
        starts = np.flatnonzero(mask & ~np.roll(mask, 1))
        if starts.size == 1:
            return int(starts[0])
        return int(idx[0])


@dataclass(frozen=True, eq=False)
class ScheduleVector:
    """Per-slot charging (+) / discharging (-) energy in kWh for one PEV."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def total_kwh(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class UserProfile:
    """A PevSpec paired with the household base load behind the same meter."""

    pev: PevSpec
    household_load_kwh: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "household_load_kwh", _freeze(self.household_load_kwh)
        )
        if (self.household_load_kwh < 0).any():
            raise ValueError(f"{self.pev.user_id}: household load must be >= 0")

    @property
    def user_id(self) -> str:
        return self.pev.user_id


@dataclass(frozen=True, eq=False)
class MarketDay:
    """Day-ahead and real-time prices plus the retailer's purchased profile.

    Prices are $/MWh; the purchased profile is kWh per slot, like every other
    load vector in the package.
    """

    da_price_per_mwh: np.ndarray
    rt_price_per_mwh: np.ndarray
    da_purchased_kwh: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "da_price_per_mwh", _freeze(self.da_price_per_mwh))
        object.__setattr__(self, "rt_price_per_mwh", _freeze(self.rt_price_per_mwh))
        object.__setattr__(self, "da_purchased_kwh", _freeze(self.da_purchased_kwh))
        h = self.da_price_per_mwh.shape[0]
        if self.rt_price_per_mwh.shape[0] != h or self.da_purchased_kwh.shape[0] != h:
            raise DimensionMismatchError(
                "da_price, rt_price and da_purchased must share one horizon length"
            )
        if (self.da_purchased_kwh < 0).any():
            raise ValueError("da_purchased_kwh must be >= 0 in every slot")


@dataclass(frozen=True)
class Violation:
    """One violated constraint: which family, where, and by how much."""

    constraint: str
    slot: int | None
    magnitude: float
    message: str


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking a schedule against a PEV's constraint set."""

    violations: tuple[Violation, ...]

    @property
    def is_feasible(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.is_feasible:
            return "feasible"
        return "; ".join(v.message for v in self.violations)


def check_feasibility(pev: PevSpec, schedule: ScheduleVector, grid: TimeGrid) -> FeasibilityReport:
    """Validate a schedule against every constraint family of one PEV.

    Checked, in order: zero outside the window, the per-slot power box,
    charge-only when V2G is off, the running SOC floor and ceiling on
    permissible slots (walked in ascending horizon order), and the session
    energy equality.  Inequalities get 1e-9 slack; the energy equality is
    checked to 1e-6 kWh.  Raises DimensionMismatchError on a length mismatch;
    constraint violations are reported, not raised.
    """
    values = grid.require_length(schedule.values, "schedule")
    mask = pev.permissible_slots
    if mask.shape[0] != grid.horizon_slots:
        raise DimensionMismatchError(
            f"{pev.user_id}: permissible_slots length {mask.shape[0]} != horizon "
            f"{grid.horizon_slots}"
        )
    cap = pev.max_power_kw * grid.slot_hours
    violations: list[Violation] = []

    for t in np.flatnonzero(~mask):
        if abs(values[t]) > SLACK_TOL:
            violations.append(
                Violation(
                    "window", int(t), abs(float(values[t])),
                    f"nonzero energy {values[t]:.9g} outside window at slot {t}",
                )
            )
    for t in pev.masked_slots:
        v = float(values[t])
        if abs(v) > cap + SLACK_TOL:
            violations.append(
                Violation(
                    "power_bound", int(t), abs(v) - cap,
                    f"power bound exceeded at slot {t} by {abs(v) - cap:.9g} kWh",
                )
            )
        if not pev.v2g_enabled and v < -SLACK_TOL:
            violations.append(
                Violation(
                    "charge_only", int(t), -v,
                    f"discharge {v:.9g} at slot {t} but V2G is disabled",
                )
            )

    soc = pev.soc_arrival_kwh
    floor = pev.min_soc_kwh
    for t in pev.masked_slots:
        soc += float(values[t])
        if soc < floor - SLACK_TOL:
            violations.append(
                Violation(
                    "soc_floor", int(t), floor - soc,
                    f"SOC {soc:.9g} below floor {floor:.9g} after slot {t}",
                )
            )
        if soc > pev.capacity_kwh + SLACK_TOL:
            violations.append(
                Violation(
                    "soc_ceiling", int(t), soc - pev.capacity_kwh,
                    f"SOC {soc:.9g} above capacity {pev.capacity_kwh:.9g} after slot {t}",
                )
            )

    delivered = float(values.sum())
    gap = delivered - pev.required_energy_kwh
    if abs(gap) > ENERGY_TOL:
        violations.append(
            Violation(
                "energy_equality", None, abs(gap),
                f"delivered {delivered:.9g} kWh != required "
                f"{pev.required_energy_kwh:.9g} kWh (gap {gap:.3g})",
            )
        )
    return FeasibilityReport(tuple(violations))


def validate_pev(pev: PevSpec, grid: TimeGrid) -> None:
    """Grid-dependent PevSpec invariants; raises on violation."""
    if pev.permissible_slots.shape[0] != grid.horizon_slots:
        raise DimensionMismatchError(
            f"{pev.user_id}: mask length {pev.permissible_slots.shape[0]} != "
            f"horizon {grid.horizon_slots}"
        )
    window_cap = pev.max_power_kw * grid.slot_hours * int(pev.permissible_slots.sum())
    if pev.required_energy_kwh > window_cap + ENERGY_TOL:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: required energy {pev.required_energy_kwh} kWh exceeds "
            f"window capacity {window_cap} kWh"
        )


def describe_infeasibility(pev: PevSpec, grid: TimeGrid) -> str | None:
    """Explain why no feasible schedule exists, or return None if one does.

    Forward interval propagation over cumulative delivered energy: after each
    permissible slot the reachable cumulative interval is intersected with the
    SOC band translated to cumulative form.  The window is exact for this
    chain-structured constraint set, so a None result guarantees feasibility.
    """
    if pev.permissible_slots.shape[0] != grid.horizon_slots:
        raise DimensionMismatchError(
            f"{pev.user_id}: mask length != horizon {grid.horizon_slots}"
        )
    cap = pev.max_power_kw * grid.slot_hours
    step_lo = -cap if pev.v2g_enabled else 0.0
    cum_floor = pev.min_soc_kwh - pev.soc_arrival_kwh
    cum_ceil = pev.capacity_kwh - pev.soc_arrival_kwh
    slots = pev.masked_slots
    if slots.size == 0:
        if abs(pev.required_energy_kwh) > ENERGY_TOL:
            return (
                f"requires {pev.required_energy_kwh} kWh but is never connected"
            )
        return None
    lo = hi = 0.0
    for t in slots:
        lo = max(lo + step_lo, cum_floor)
        hi = min(hi + cap, cum_ceil)
        if lo > hi + SLACK_TOL:
            if cum_floor > cap + SLACK_TOL and t == slots[0]:
                return (
                    f"SOC floor unreachable at slot {t}: needs "
                    f"{cum_floor:.6g} kWh in one slot but the power bound "
                    f"allows {cap:.6g}"
                )
            return f"SOC band unreachable at slot {t}"
    e = pev.required_energy_kwh
    if e < lo - ENERGY_TOL or e > hi + ENERGY_TOL:
        return (
            f"energy target {e:.6g} kWh outside reachable range "
            f"[{lo:.6g}, {hi:.6g}] kWh"
        )
    return None


def aggregate(users: Iterable[UserProfile], schedules: Mapping[str, ScheduleVector], grid: TimeGrid) -> np.ndarray:
    """Fleet aggregate: sum of household load plus PEV schedule over users.

    Raises MissingScheduleError if any user has no schedule entry.
    """
    total = np.zeros(grid.horizon_slots)
    for user in users:
        sched = schedules.get(user.user_id)
        if sched is None:
            raise MissingScheduleError(f"no schedule for user {user.user_id!r}")
        total += grid.require_length(user.household_load_kwh, f"{user.user_id} household")
        total += grid.require_length(sched.values, f"{user.user_id} schedule")
    return total


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error between two equal-length vectors (kWh^2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mse shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(diff.dot(diff) / a.shape[0])


def greedy_fill(pev: PevSpec, grid: TimeGrid) -> ScheduleVector:
    """Plug-and-charge schedule: full power from arrival until the need is met.

    Walks the window in session order (starting at the arrival slot, wrapping
    past midnight if the window does), charging at the power cap with one
    partial slot at the end.  This is the uncoordinated behaviour every
    coordinated run is compared against.
    """
    validate_pev(pev, grid)
    reason = describe_infeasibility(pev, grid)
    if reason is not None:
        raise InfeasibleInstanceError(f"{pev.user_id}: {reason}")
    h = grid.horizon_slots
    values = np.zeros(h)
    remaining = pev.required_energy_kwh
    cap = pev.max_power_kw * grid.slot_hours
    start = pev.arrival_slot
    if start is not None:
        for k in range(h):
            if remaining <= 0:
                break
            t = (start + k) % h
            if not pev.permissible_slots[t]:
                continue
            put = min(cap, remaining)
            values[t] = put
            remaining -= put
    schedule = ScheduleVector(values)
    report = check_feasibility(pev, schedule, grid)
    if not report.is_feasible:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: greedy fill violates {report.summary()}"
        )
    return schedule


@dataclass(frozen=True, eq=False)
class FleetState:
    """Immutable snapshot of every user's schedule plus the cached aggregate.

    The cache is maintained incrementally by with_schedule; verify_aggregate
    recomputes it from scratch and checks agreement to 1e-9 per slot.
    """

    users: tuple[UserProfile, ...]
    schedules: Mapping[str, ScheduleVector]
    aggregate_kwh: np.ndarray
    _by_id: Mapping[str, UserProfile] = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "aggregate_kwh", _freeze(self.aggregate_kwh))
        if self._by_id is None:
            object.__setattr__(
                self, "_by_id", {u.user_id: u for u in self.users}
            )

    @classmethod
    def build(cls, users: Iterable[UserProfile], schedules: Mapping[str, ScheduleVector], grid: TimeGrid) -> "FleetState":
        users = tuple(users)
        ids = [u.user_id for u in users]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate user_id in fleet")
        schedules = dict(schedules)
        return cls(users, schedules, aggregate(users, schedules, grid))

    def user(self, user_id: str) -> UserProfile:
        try:
            return self._by_id[user_id]
        except KeyError:
            raise MissingScheduleError(f"unknown user {user_id!r}") from None

    def schedule(self, user_id: str) -> ScheduleVector:
        try:
            return self.schedules[user_id]
        except KeyError:
            raise MissingScheduleError(f"no schedule for user {user_id!r}") from None

    def with_schedule(self, user_id: str, schedule: ScheduleVector) -> "FleetState":
        """New snapshot with one user's schedule replaced; O(H) aggregate update."""
        old = self.schedule(user_id)
        self.user(user_id)
        new_schedules = dict(self.schedules)
        new_schedules[user_id] = schedule
        new_aggregate = self.aggregate_kwh - old.values + schedule.values
        return FleetState(self.users, new_schedules, new_aggregate, self._by_id)

    def verify_aggregate(self, grid: TimeGrid) -> None:
        """Assert the cached aggregate matches a from-scratch recomputation."""
        fresh = aggregate(self.users, self.schedules, grid)
        drift = np.abs(fresh - self.aggregate_kwh).max() if fresh.size else 0.0
        if drift > 1e-9:
            raise AssertionError(f"aggregate cache drifted by {drift:.3g} kWh")
