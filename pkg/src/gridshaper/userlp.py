"""Per-user schedule optimization.

Two problems are solved here, both exact linear programs over one user's
connection window:

* shaping (solve_p1): track the retailer's purchased profile.  The user
  minimizes ``<l_pev, c>`` with ``c = household + others_aggregate - target``,
  subject to the session energy equality, the power box, zero outside the
  window, and the running SOC band.
* altering (solve_p2): after a real-time price event at slot t0 the already
  dispatched prefix ``[0, t0)`` is frozen and the remaining energy is
  re-optimized over the rest of the window against the blended objective
  ``lam * <l', c> + (1 - lam) * l'[t0]``.  Constant terms of the altering
  objective do not move the argmin and are dropped inside the solver; the
  reporting helpers below re-add them.

Both reduce to the same chain-structured LP (box + running-sum band + total
equality), assembled in ``_solve_chain`` and handed to the in-repo simplex.
Flat cost stretches leave the minimizer badly non-unique, so a second solve
restricted to the optimal face picks the canonical optimum: drop any
charge/discharge throughput the objective does not pay for, then push what
remains onto the earliest slots of the window.  Re-solving an identical
instance is bit-identical.

``brute_force_schedule`` is the deliberately naive test oracle: exhaustive
lattice enumeration, kept independent of the LP path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (
    ENERGY_TOL,
    SLACK_TOL,
    DimensionMismatchError,
    InfeasibleInstanceError,
    PevSpec,
    ScheduleVector,
    TimeGrid,
    validate_pev,
)
from .simplex import LpInfeasibleError, solve_lp

_SNAP = 1e-11


@dataclass(frozen=True, eq=False)
class ShapingInstance:
    """One user's view of the fleet for a shaping solve.

    The user never sees individual neighbours, only the fleet aggregate with
    itself removed (``others_aggregate_kwh``) and the retailer's target.
    """

    pev: PevSpec
    household_load_kwh: np.ndarray
    others_aggregate_kwh: np.ndarray
    target_kwh: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        for name in ("household_load_kwh", "others_aggregate_kwh", "target_kwh"):
            arr = self.grid.require_length(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def cost_vector(self) -> np.ndarray:
        """Per-slot marginal cost c_t = household + others - target."""
        return self.household_load_kwh + self.others_aggregate_kwh - self.target_kwh


@dataclass(frozen=True, eq=False)
class AlteringInstance:
    """Altering solve: frozen prefix, blended objective at slot t0.

    ``lam`` weighs the shape-tracking term against the aggregate reduction at
    t0; 1 recovers pure shaping on the suffix, 0 cares only about t0.
    """

    pev: PevSpec
    household_load_kwh: np.ndarray
    others_aggregate_kwh: np.ndarray
    target_kwh: np.ndarray
    frozen_prefix_kwh: np.ndarray
    t0: int
    lam: float
    grid: TimeGrid

    def __post_init__(self):
        for name in ("household_load_kwh", "others_aggregate_kwh", "target_kwh"):
            arr = self.grid.require_length(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not 0 <= self.t0 < self.grid.horizon_slots:
            raise ValueError(f"t0 {self.t0} outside [0, {self.grid.horizon_slots})")
        prefix = np.asarray(self.frozen_prefix_kwh, dtype=float)
        if prefix.ndim != 1 or prefix.shape[0] != self.t0:
            raise DimensionMismatchError(
                f"frozen prefix must have length t0={self.t0}, got {prefix.shape}"
            )
        prefix.setflags(write=False)
        object.__setattr__(self, "frozen_prefix_kwh", prefix)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        off_window = ~self.pev.permissible_slots[: self.t0]
        if np.abs(prefix[off_window]).max(initial=0.0) > SLACK_TOL:
            raise ValueError(
                f"{self.pev.user_id}: frozen prefix is nonzero outside the window"
            )

    def cost_vector(self) -> np.ndarray:
        return self.household_load_kwh + self.others_aggregate_kwh - self.target_kwh


def _reach_reason(slots, cap, lo, cum_floor, cum_ceil, total) -> str | None:
    """Forward interval propagation over cumulative energy; exact for chains."""
    if len(slots) == 0:
        if abs(total) > ENERGY_TOL:
            return f"needs {total:.6g} kWh with no permissible slots"
        return None
    reach_lo = reach_hi = 0.0
    for t in slots:
        reach_lo = max(reach_lo + lo, cum_floor)
        reach_hi = min(reach_hi + cap, cum_ceil)
        if reach_lo > reach_hi + SLACK_TOL:
            return f"SOC band [{cum_floor:.6g}, {cum_ceil:.6g}] unreachable at slot {t}"
    if total < reach_lo - ENERGY_TOL or total > reach_hi + ENERGY_TOL:
        return (
            f"energy target {total:.6g} kWh outside reachable "
            f"[{reach_lo:.6g}, {reach_hi:.6g}] kWh"
        )
    return None


def _earliest_on_face(costs, cap, lo, cum_floor, cum_ceil, total, best) -> np.ndarray:
    """Canonical representative of the optimal face ``costs.x <= best``.

    Split x = p - q with p, q >= 0 and minimize ``sum_i (n + i) * (p_i + q_i)``
    over the original polytope plus the face row.  At the optimum p and q never
    overlap, so the secondary objective is the index-weighted throughput
    ``sum (n + i) |x_i|``: the offset n makes any idle charge/discharge round
    trip cost more than the largest index rearrangement can save, and the
    increasing weights break the remaining ties toward the earliest slots.

    The face row is pinned at ``best`` with no slack.  Any slack would be
    spent in full (less throughput is always cheaper) and come back as a
    systematic objective regression, while slack below the simplex ratio-test
    tie band corrupts the pivot order.  The arithmetic mismatch between the
    two passes is dust and phase 1 tolerates it.
    """
    n = len(costs)
    costs = np.asarray(costs, dtype=float)
    v2g = lo < 0.0
    width = 2 * n if v2g else n

    def spread(head, tail):
        return np.concatenate([head, tail]) if v2g else head

    a_rows, b_vals = [], []
    for k in range(1, n):  # last prefix is pinned by the equality
        if cum_ceil < k * cap - SLACK_TOL:  # else never binds
            row = np.zeros(width)
            row[:k] = 1.0
            if v2g:
                row[n : n + k] = -1.0
            a_rows.append(row)
            b_vals.append(cum_ceil)
        if cum_floor > k * lo + SLACK_TOL:  # else implied by the box
            row = np.zeros(width)
            row[:k] = -1.0
            if v2g:
                row[n : n + k] = 1.0
            a_rows.append(row)
            b_vals.append(-cum_floor)
    box = np.eye(n)
    a_rows.append(np.hstack([box, np.zeros((n, n))]) if v2g else box)
    b_vals.extend([cap] * n)
    if v2g:
        a_rows.append(np.hstack([np.zeros((n, n)), box]))
        b_vals.extend([-lo] * n)
    a_rows.append(spread(costs, -costs).reshape(1, -1))
    b_vals.append(best)
    weights = n + np.arange(n, dtype=float)
    try:
        z = solve_lp(
            spread(weights, weights),
            np.vstack(a_rows),
            np.asarray(b_vals),
            spread(np.ones(n), -np.ones(n)).reshape(1, -1),
            np.array([total]),
        )
    except LpInfeasibleError as exc:  # pragma: no cover - pass 1 succeeded
        raise InfeasibleInstanceError(str(exc)) from exc
    return z[:n] - z[n:] if v2g else z


def _solve_chain(costs, cap, lo, cum_floor, cum_ceil, total) -> np.ndarray:
    """Exact minimum of ``costs.x`` over the chain polytope.

    Variables are per-slot energies in slot order with box [lo, cap], running
    sums confined to [cum_floor, cum_ceil], and a fixed total.  Shifted to
    y = x - lo >= 0 and passed to the two-phase simplex; redundant rows are
    pruned first so the common no-V2G case stays small.  A second solve on
    the optimal face then canonicalizes among equal-cost optima (see
    ``_earliest_on_face``); without it the returned vertex is an accident of
    the pivot order and fleet sweeps never settle on flat-cost fixtures.
    """
    m = len(costs)
    if m == 0:
        return np.zeros(0)
    if m == 1:
        return np.array([total])
    width = cap - lo
    a_ub_rows, b_ub = [], []
    for i in range(m - 1):  # last prefix is pinned by the equality
        k = i + 1
        upper = cum_ceil - k * lo
        if upper < k * width - SLACK_TOL:  # else never binds
            row = np.zeros(m)
            row[: i + 1] = 1.0
            a_ub_rows.append(row)
            b_ub.append(upper)
        lower = cum_floor - k * lo
        if lower > SLACK_TOL:  # else implied by y >= 0
            row = np.zeros(m)
            row[: i + 1] = -1.0
            a_ub_rows.append(row)
            b_ub.append(-lower)
    a_ub_rows.append(np.eye(m))
    b_ub.extend([width] * m)
    a_ub = np.vstack(a_ub_rows)
    b_ub = np.asarray(b_ub)
    a_eq = np.ones((1, m))
    b_eq = np.array([total - m * lo])
    try:
        y = solve_lp(costs, a_ub, b_ub, a_eq, b_eq)
    except LpInfeasibleError as exc:  # pragma: no cover - guarded upstream
        raise InfeasibleInstanceError(str(exc)) from exc
    x = _earliest_on_face(
        costs, cap, lo, cum_floor, cum_ceil, total, float(costs @ (y + lo))
    )
    x[np.abs(x) < _SNAP] = 0.0
    x[np.abs(x - cap) < _SNAP] = cap
    x[np.abs(x - lo) < _SNAP] = lo
    return x


def solve_p1(instance: ShapingInstance) -> ScheduleVector:
    """Exact best response for the shaping problem.

    Raises InfeasibleInstanceError naming the binding constraint when the
    window cannot deliver the session energy within the SOC band.
    """
    pev, grid = instance.pev, instance.grid
    validate_pev(pev, grid)
    slots = pev.masked_slots
    cap = pev.max_power_kw * grid.slot_hours
    lo = -cap if pev.v2g_enabled else 0.0
    cum_floor = pev.min_soc_kwh - pev.soc_arrival_kwh
    cum_ceil = pev.capacity_kwh - pev.soc_arrival_kwh
    reason = _reach_reason(slots, cap, lo, cum_floor, cum_ceil, pev.required_energy_kwh)
    if reason is not None:
        raise InfeasibleInstanceError(f"{pev.user_id}: {reason}")
    c = instance.cost_vector()
    x = _solve_chain(c[slots], cap, lo, cum_floor, cum_ceil, pev.required_energy_kwh)
    values = np.zeros(grid.horizon_slots)
    values[slots] = x
    return ScheduleVector(values)


def solve_p2(instance: AlteringInstance) -> ScheduleVector:
    """Exact altering solve: prefix copied verbatim, suffix re-optimized.

    The suffix LP reuses the P1 machinery with cost ``lam * c`` plus
    ``(1 - lam)`` added at t0, SOC seeded from the prefix, and the remaining
    session energy as the new total.
    """
    pev, grid, t0 = instance.pev, instance.grid, instance.t0
    validate_pev(pev, grid)
    slots = pev.masked_slots
    suffix = slots[slots >= t0]
    prefix_energy = float(instance.frozen_prefix_kwh.sum())
    remaining = pev.required_energy_kwh - prefix_energy
    cap = pev.max_power_kw * grid.slot_hours
    lo = -cap if pev.v2g_enabled else 0.0
    soc_at_t0 = pev.soc_arrival_kwh + prefix_energy
    cum_floor = pev.min_soc_kwh - soc_at_t0
    cum_ceil = pev.capacity_kwh - soc_at_t0
    reason = _reach_reason(suffix, cap, lo, cum_floor, cum_ceil, remaining)
    if reason is not None:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: altering at t0={t0} infeasible: {reason}"
        )
    costs = instance.lam * instance.cost_vector()[suffix]
    if suffix.size and suffix[0] == t0:
        costs = costs.copy()
        costs[0] += 1.0 - instance.lam
    x = _solve_chain(costs, cap, lo, cum_floor, cum_ceil, remaining)
    values = np.zeros(grid.horizon_slots)
    values[: t0] = instance.frozen_prefix_kwh
    values[suffix] = x
    return ScheduleVector(values)


def p1_objective(instance: ShapingInstance, values: np.ndarray) -> float:
    """Shaping objective ``<l_pev, c>`` of a candidate schedule."""
    return float(np.dot(values, instance.cost_vector()))


def p2_objective(instance: AlteringInstance, values: np.ndarray) -> float:
    """Full altering objective including the constant terms dropped in-solver.

    ``lam * <l', c> + (1 - lam) * (others[t0] + household[t0] + l'[t0])``,
    which keeps logged values comparable across users and sweeps.
    """
    t0 = instance.t0
    aggregate_at_t0 = (
        instance.others_aggregate_kwh[t0]
        + instance.household_load_kwh[t0]
        + values[t0]
    )
    return float(
        instance.lam * np.dot(values, instance.cost_vector())
        + (1.0 - instance.lam) * aggregate_at_t0
    )


def lattice_step(pev: PevSpec, grid_levels: int, grid: TimeGrid) -> float:
    """Spacing of the oracle lattice over [-p_max*dt, +p_max*dt]."""
    cap = pev.max_power_kw * grid.slot_hours
    return 2.0 * cap / (grid_levels - 1)


def lattice_bound(pev: PevSpec, cost_vector: np.ndarray, grid_levels: int, grid: TimeGrid) -> float:
    """Discretization bound delta = H * step * max |c| for oracle comparisons."""
    step = lattice_step(pev, grid_levels, grid)
    return grid.horizon_slots * step * float(np.abs(cost_vector).max())


def brute_force_schedule(
    pev: PevSpec,
    cost_vector: np.ndarray,
    extra_t0_weight: tuple[int, float] | None = None,
    grid_levels: int = 9,
    *,
    grid: TimeGrid,
) -> ScheduleVector:
    """Exhaustive lattice oracle for tiny instances (test support only).

    Enumerates every assignment of masked slots to the uniform lattice
    ``{-cap + k * step}`` (nonnegative points only when V2G is off), keeps
    points satisfying the box/SOC constraints with the energy equality
    relaxed to ``|sum - E| <= step / 2``, rescales each survivor onto the
    exact energy total, and returns the minimum-objective one (first hit in
    enumeration order on ties).  Survivors that the rescale drags out of the
    box or SOC band by more than one step are dropped instead of trusted.
    Note the lattice contains an exact zero only for odd ``grid_levels``;
    callers that need idle slots without V2G should stick to odd counts.
    ``extra_t0_weight`` is an optional
    ``(slot, weight)`` pair added to that slot's cost coefficient, which is
    how the altering objective's scalar term is expressed to the oracle.

    Refuses instances beyond H <= 6 or grid_levels > 9: the point of this
    routine is to stay small enough to be obviously correct.
    """
    h = grid.horizon_slots
    if h > 6:
        raise ValueError(f"brute force refused: horizon {h} > 6")
    if not 2 <= grid_levels <= 9:
        raise ValueError(f"brute force refused: grid_levels {grid_levels} outside [2, 9]")
    cost_vector = grid.require_length(cost_vector, "cost_vector")
    validate_pev(pev, grid)
    cap = pev.max_power_kw * grid.slot_hours
    step = lattice_step(pev, grid_levels, grid)
    levels = -cap + step * np.arange(grid_levels)
    if not pev.v2g_enabled:
        levels = levels[levels >= -SLACK_TOL]
    slots = pev.masked_slots
    m = slots.size
    eff_cost = cost_vector.copy()
    if extra_t0_weight is not None:
        t0, weight = extra_t0_weight
        eff_cost[t0] += weight

    if m == 0:
        candidates = np.zeros((1, 0))
    else:
        candidates = np.array(list(itertools.product(levels, repeat=m)))
    sums = candidates.sum(axis=1)
    keep = np.abs(sums - pev.required_energy_kwh) <= step / 2 + SLACK_TOL
    # SOC gets the same step/2 slack as the energy equality: the rescale can
    # still pull such points back inside, and the post-repair check decides
    soc = pev.soc_arrival_kwh + np.cumsum(candidates, axis=1)
    if m:
        keep &= (soc >= pev.min_soc_kwh - step / 2 - SLACK_TOL).all(axis=1)
        keep &= (soc <= pev.capacity_kwh + step / 2 + SLACK_TOL).all(axis=1)
    candidates = candidates[keep]
    if candidates.shape[0] == 0:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: no lattice point within step/2 of the energy target"
        )
    sums = candidates.sum(axis=1)
    safe = np.where(np.abs(sums) > 1e-12, sums, 1.0)
    scale = np.where(np.abs(sums) > 1e-12, pev.required_energy_kwh / safe, 1.0)
    repaired = candidates * scale[:, None]
    # the rescale must not manufacture feasibility: drop sign flips and any
    # point pushed more than one lattice step outside the box or SOC band
    ok = scale >= 0.0
    if m:
        ok &= (np.abs(repaired) <= cap + step + SLACK_TOL).all(axis=1)
        soc_rep = pev.soc_arrival_kwh + np.cumsum(repaired, axis=1)
        ok &= (soc_rep >= pev.min_soc_kwh - step - SLACK_TOL).all(axis=1)
        ok &= (soc_rep <= pev.capacity_kwh + step + SLACK_TOL).all(axis=1)
    repaired = repaired[ok]
    if repaired.shape[0] == 0:
        raise InfeasibleInstanceError(
            f"{pev.user_id}: energy rescale left no usable lattice point"
        )
    objectives = repaired @ eff_cost[slots] if m else np.zeros(1)
    best = int(np.argmin(objectives))
    values = np.zeros(h)
    if m:
        values[slots] = repaired[best]
    return ScheduleVector(values)
