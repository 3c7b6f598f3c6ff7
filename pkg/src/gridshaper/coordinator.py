"""Retailer-side orchestration of the two scheduling phases.

run_shaping performs sequential best-response sweeps: users update one at a
time in ascending user_id order, each seeing only the fleet aggregate with
itself removed, never a neighbour's individual profile.  run_altering repeats
the structure from a trigger slot t0 onward with every already-dispatched
prefix frozen.  Both stop per a ConvergencePolicy: a fixed sweep count, an
aggregate-MSE threshold between consecutive sweeps, or whichever fires first.

Every user update appends one JSON line to the optional event sink
(phase, sweep, user_id, objective before/after) so a run can be audited
offline.  Per-update descent is asserted: a best response can never worsen
the user's own objective against the current state of everyone else.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .core import (
    SLACK_TOL,
    FleetState,
    InfeasibleInstanceError,
    MarketDay,
    PevSpec,
    ScheduleVector,
    TimeGrid,
    UserProfile,
    check_feasibility,
    describe_infeasibility,
    greedy_fill,
    mse,
)
from .userlp import (
    AlteringInstance,
    ShapingInstance,
    p1_objective,
    p2_objective,
    solve_p1,
    solve_p2,
)

# hard stop for pure mse_threshold runs that never meet the tolerance
_SWEEP_SAFETY_CAP = 1000


class StopMode(enum.Enum):
    FIXED_ITERATIONS = "fixed_iterations"
    MSE_THRESHOLD = "mse_threshold"
    WHICHEVER_FIRST = "whichever_first"


@dataclass(frozen=True)
class ConvergencePolicy:
    """Stopping rule for best-response sweeps.

    mse_tolerance is in kWh^2, compared against the mean squared change of
    the fleet aggregate between consecutive sweeps.
    """

    max_iterations: int = 5
    mse_tolerance: float = 1e-4
    mode: StopMode = StopMode.WHICHEVER_FIRST

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.mse_tolerance < 0:
            raise ValueError(f"mse_tolerance must be >= 0, got {self.mse_tolerance}")

    def should_stop(self, sweeps_done: int, last_mse: float) -> bool:
        by_count = sweeps_done >= self.max_iterations
        by_mse = last_mse <= self.mse_tolerance
        if self.mode is StopMode.FIXED_ITERATIONS:
            return by_count
        if self.mode is StopMode.MSE_THRESHOLD:
            return by_mse or sweeps_done >= _SWEEP_SAFETY_CAP
        return by_count or by_mse


@dataclass(frozen=True)
class ShapedOutcome:
    """Result of a sweep phase: final fleet plus the convergence trace."""

    fleet: FleetState
    iterations_run: int
    mse_trace: tuple[float, ...]

    def __post_init__(self):
        if len(self.mse_trace) != self.iterations_run:
            raise ValueError("mse_trace length must equal iterations_run")


class TriggerMode(enum.Enum):
    RATIO = "ratio"
    SPREAD = "spread"
    MANUAL = "manual"


@dataclass(frozen=True)
class AlterTriggerRule:
    """When does an intraday price reveal justify re-optimizing the fleet.

    ratio mode fires on rt >= ratio_threshold * da (da must be positive to
    qualify: a ratio against a zero or negative purchase price says nothing).
    spread mode fires on rt - da >= spread_threshold_per_mwh.
    """

    mode: TriggerMode = TriggerMode.RATIO
    ratio_threshold: float = 3.0
    spread_threshold_per_mwh: float = 100.0
    manual_t0: int | None = None

    def __post_init__(self):
        if self.ratio_threshold <= 1.0:
            raise ValueError(f"ratio_threshold must be > 1, got {self.ratio_threshold}")
        if self.mode is TriggerMode.MANUAL and self.manual_t0 is None:
            raise ValueError("manual trigger mode requires manual_t0")


def others_aggregate(fleet: FleetState, user_id: str) -> np.ndarray:
    """Fleet aggregate with user_id's household and schedule removed."""
    profile = fleet.user(user_id)
    own = profile.household_load_kwh + fleet.schedule(user_id).values
    return fleet.aggregate_kwh - own


def _emit(sink: IO[str] | None, phase: str, sweep: int, user_id: str,
          before: float, after: float) -> None:
    if sink is None:
        return
    sink.write(json.dumps({
        "phase": phase,
        "sweep": sweep,
        "user_id": user_id,
        "objective_before": before,
        "objective_after": after,
    }) + "\n")


def _require_all_feasible(users: Sequence[UserProfile], grid: TimeGrid) -> None:
    for profile in users:
        reason = describe_infeasibility(profile.pev, grid)
        if reason is not None:
            raise InfeasibleInstanceError(f"{profile.user_id}: {reason}")


def _repair_schedule(pev: PevSpec, grid: TimeGrid) -> ScheduleVector:
    """Zeros-then-repair initial point: lift to the SOC floor if needed at
    the first connected slot, then fill the energy from the latest slots
    backward.  A deliberately different starting shape from greedy_fill."""
    cap = pev.max_power_kw * grid.slot_hours
    values = np.zeros(grid.horizon_slots)
    slots = pev.masked_slots
    remaining = pev.required_energy_kwh
    if slots.size == 0:
        return ScheduleVector(values)
    deficit = pev.min_soc_kwh - pev.soc_arrival_kwh
    if deficit > SLACK_TOL:
        lift = min(cap, remaining, deficit)
        values[slots[0]] = lift
        remaining -= lift
    for t in reversed(slots):
        if remaining <= SLACK_TOL:
            break
        take = min(cap - values[t], remaining)
        values[t] += take
        remaining -= take
    schedule = ScheduleVector(values)
    report = check_feasibility(pev, schedule, grid)
    if not report.is_feasible:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: repair initializer failed: {report.summary()}"
        )
    return schedule


_INITIALIZERS = {
    "greedy": greedy_fill,
    "repair": _repair_schedule,
}


def run_shaping(
    users: Sequence[UserProfile],
    target_kwh: np.ndarray,
    policy: ConvergencePolicy = ConvergencePolicy(),
    initializer: str = "greedy",
    *,
    grid: TimeGrid = TimeGrid(),
    event_sink: IO[str] | None = None,
) -> ShapedOutcome:
    """Sequential best-response shaping toward the purchased profile.

    Users update in ascending user_id order; each update re-solves that
    user's tracking problem against the latest everyone-else aggregate.
    """
    target_kwh = grid.require_length(target_kwh, "target_kwh")
    try:
        init = _INITIALIZERS[initializer]
    except KeyError:
        raise ValueError(
            f"unknown initializer {initializer!r}, expected one of "
            f"{sorted(_INITIALIZERS)}"
        ) from None
    _require_all_feasible(users, grid)
    schedules = {u.user_id: init(u.pev, grid) for u in users}
    fleet = FleetState.build(users, schedules, grid)
    order = sorted(u.user_id for u in users)
    if not order:
        return ShapedOutcome(fleet, 0, ())

    trace: list[float] = []
    sweeps = 0
    while True:
        previous = fleet.aggregate_kwh
        for user_id in order:
            profile = fleet.user(user_id)
            others = others_aggregate(fleet, user_id)
            instance = ShapingInstance(
                pev=profile.pev,
                household_load_kwh=profile.household_load_kwh,
                others_aggregate_kwh=others,
                target_kwh=target_kwh,
                grid=grid,
            )
            before = p1_objective(instance, fleet.schedule(user_id).values)
            updated = solve_p1(instance)
            after = p1_objective(instance, updated.values)
            assert after <= before + 1e-9, (
                f"{user_id}: best response worsened objective "
                f"{before} -> {after}"
            )
            fleet = fleet.with_schedule(user_id, updated)
            _emit(event_sink, "shaping", sweeps + 1, user_id, before, after)
        sweeps += 1
        trace.append(mse(fleet.aggregate_kwh, previous))
        if policy.should_stop(sweeps, trace[-1]):
            return ShapedOutcome(fleet, sweeps, tuple(trace))


def detect_t0(
    market: MarketDay,
    revealed_upto: int,
    rule: AlterTriggerRule = AlterTriggerRule(),
) -> int | None:
    """First revealed slot whose RT price qualifies as an event, else None."""
    horizon = len(market.da_price_per_mwh)
    if not 0 <= revealed_upto <= horizon:
        raise ValueError(f"revealed_upto {revealed_upto} outside [0, {horizon}]")
    if rule.mode is TriggerMode.MANUAL:
        return rule.manual_t0
    da = market.da_price_per_mwh[:revealed_upto]
    rt = market.rt_price_per_mwh[:revealed_upto]
    if rule.mode is TriggerMode.RATIO:
        hits = (da > 0.0) & (rt >= rule.ratio_threshold * da)
    else:
        hits = (rt - da) >= rule.spread_threshold_per_mwh
    qualifying = np.flatnonzero(hits)
    return int(qualifying[0]) if qualifying.size else None


def run_altering(
    shaped: ShapedOutcome,
    t0: int,
    lam: float,
    policy: ConvergencePolicy = ConvergencePolicy(),
    *,
    target_kwh: np.ndarray,
    grid: TimeGrid = TimeGrid(),
    event_sink: IO[str] | None = None,
) -> ShapedOutcome:
    """Re-optimize the fleet from slot t0 with all earlier dispatch frozen.

    Users with no connected slot at or after t0 have nothing to decide and
    are carried over unchanged.
    """
    target_kwh = grid.require_length(target_kwh, "target_kwh")
    if not 0 <= t0 < grid.horizon_slots:
        raise ValueError(f"t0 {t0} outside [0, {grid.horizon_slots})")
    fleet = shaped.fleet
    _require_all_feasible(fleet.users, grid)
    prefixes = {
        u.user_id: fleet.schedule(u.user_id).values[:t0].copy()
        for u in fleet.users
    }
    movable = sorted(
        u.user_id for u in fleet.users if u.pev.permissible_slots[t0:].any()
    )
    if not movable:
        return ShapedOutcome(fleet, 0, ())

    trace: list[float] = []
    sweeps = 0
    while True:
        previous = fleet.aggregate_kwh
        for user_id in movable:
            profile = fleet.user(user_id)
            instance = AlteringInstance(
                pev=profile.pev,
                household_load_kwh=profile.household_load_kwh,
                others_aggregate_kwh=others_aggregate(fleet, user_id),
                target_kwh=target_kwh,
                frozen_prefix_kwh=prefixes[user_id],
                t0=t0,
                lam=lam,
                grid=grid,
            )
            before = p2_objective(instance, fleet.schedule(user_id).values)
            updated = solve_p2(instance)
            after = p2_objective(instance, updated.values)
            assert after <= before + 1e-9, (
                f"{user_id}: best response worsened objective "
                f"{before} -> {after}"
            )
            fleet = fleet.with_schedule(user_id, updated)
            _emit(event_sink, "altering", sweeps + 1, user_id, before, after)
        sweeps += 1
        trace.append(mse(fleet.aggregate_kwh, previous))
        if policy.should_stop(sweeps, trace[-1]):
            return ShapedOutcome(fleet, sweeps, tuple(trace))
