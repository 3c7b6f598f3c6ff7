"""Shaping and altering solver tests.

Expected schedules below were worked by hand first (SOC walks included in
comments) and frozen; the brute-force lattice oracle then provides the
independent check on randomized instances.  delta is the documented
discretization bound H * step * max|c|.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridshaper.core import (
    DimensionMismatchError,
    InfeasibleInstanceError,
    PevSpec,
    TimeGrid,
    check_feasibility,
    greedy_fill,
)
from gridshaper.userlp import (
    AlteringInstance,
    ShapingInstance,
    brute_force_schedule,
    lattice_bound,
    lattice_step,
    p1_objective,
    p2_objective,
    solve_p1,
    solve_p2,
)


def make_pev(mask, energy, *, v2g=False, soc=None, capacity=24.0, power=1.8, user_id="u0"):
    mask = np.asarray(mask, dtype=bool)
    if soc is None:
        soc = capacity - energy
    return PevSpec(
        user_id=user_id,
        permissible_slots=mask,
        required_energy_kwh=energy,
        max_power_kw=power,
        capacity_kwh=capacity,
        soc_arrival_kwh=soc,
        v2g_enabled=v2g,
    )


def shaping(pev, costs, grid):
    """Instance with cost_vector() == costs (others and target zeroed out)."""
    h = grid.horizon_slots
    return ShapingInstance(
        pev=pev,
        household_load_kwh=np.asarray(costs, dtype=float),
        others_aggregate_kwh=np.zeros(h),
        target_kwh=np.zeros(h),
        grid=grid,
    )


def altering(pev, costs, prefix, t0, lam, grid):
    h = grid.horizon_slots
    return AlteringInstance(
        pev=pev,
        household_load_kwh=np.asarray(costs, dtype=float),
        others_aggregate_kwh=np.zeros(h),
        target_kwh=np.zeros(h),
        frozen_prefix_kwh=np.asarray(prefix, dtype=float),
        t0=t0,
        lam=lam,
        grid=grid,
    )


GRID3 = TimeGrid(horizon_slots=3)


# ------------------------------------------------------------------
# hand-worked shaping cases
# ------------------------------------------------------------------

def test_cheapest_slot_takes_everything():
    pev = make_pev([True] * 3, energy=1.8)
    out = solve_p1(shaping(pev, [5.0, 1.0, 3.0], GRID3)).values
    assert np.allclose(out, [0.0, 1.8, 0.0], atol=1e-9), out


def test_v2g_arbitrage_charges_cheap_discharges_dear():
    # soc walk 8.4 -> 10.2 -> 12.0 -> 10.2, inside [4.8, 24]
    pev = make_pev([True] * 3, energy=1.8, v2g=True, soc=8.4)
    inst = shaping(pev, [-4.0, -4.0, 10.0], GRID3)
    out = solve_p1(inst).values
    assert np.allclose(out, [1.8, 1.8, -1.8], atol=1e-9), out
    assert p1_objective(inst, out) == pytest.approx(-32.4)


def test_soc_floor_limits_early_discharge():
    # zero net energy; best is [-1.8, 1.8] and the floor (4.8) binds at slot 0:
    # 6.6 - 1.8 = 4.8 exactly
    grid = TimeGrid(horizon_slots=2)
    pev = make_pev([True, True], energy=0.0, v2g=True, soc=6.6)
    out = solve_p1(shaping(pev, [10.0, -5.0], grid)).values
    assert np.allclose(out, [-1.8, 1.8], atol=1e-9), out


def test_soc_ceiling_limits_early_charge():
    # only 1.0 kWh of headroom, so the cheap first slot saturates at 1.0
    grid = TimeGrid(horizon_slots=2)
    pev = make_pev([True, True], energy=0.0, v2g=True, soc=23.0)
    out = solve_p1(shaping(pev, [-5.0, 10.0], grid)).values
    assert np.allclose(out, [1.0, -1.0], atol=1e-9), out


def test_single_slot_equals_oracle_exactly():
    pev = make_pev([False, True, False], energy=1.8)
    costs = np.array([2.0, 7.0, 1.0])
    lp = solve_p1(shaping(pev, costs, GRID3)).values
    oracle = brute_force_schedule(pev, costs, grid=GRID3).values
    assert np.allclose(lp, [0.0, 1.8, 0.0], atol=1e-9)
    assert np.array_equal(lp, oracle)


def test_solution_respects_window():
    mask = np.array([True, False, True])
    pev = make_pev(mask, energy=2.0)
    out = solve_p1(shaping(pev, [1.0, -99.0, 2.0], GRID3)).values
    assert out[1] == 0.0
    assert out.sum() == pytest.approx(2.0)


def test_cost_shift_does_not_move_argmin():
    pev = make_pev([True] * 3, energy=2.5, v2g=True, soc=12.0)
    base = np.array([3.0, -1.0, 2.0])
    a = solve_p1(shaping(pev, base, GRID3)).values
    b = solve_p1(shaping(pev, base + 7.0, GRID3)).values
    assert np.allclose(a, b, atol=1e-9)


def test_resolve_is_bit_identical():
    pev = make_pev([True] * 3, energy=2.5, v2g=True, soc=12.0)
    inst = shaping(pev, [3.0, -1.0, 2.0], GRID3)
    assert np.array_equal(solve_p1(inst).values, solve_p1(inst).values)


# ------------------------------------------------------------------
# choice among equal-cost optima
# ------------------------------------------------------------------

def test_flat_costs_fill_earliest_slots():
    grid = TimeGrid(horizon_slots=4)
    pev = make_pev([True] * 4, energy=2.0)
    out = solve_p1(shaping(pev, [7.0] * 4, grid)).values
    assert out == pytest.approx([1.8, 0.2, 0.0, 0.0], abs=1e-12), out


def test_flat_costs_with_v2g_stay_round_trip_free():
    # with headroom and flat costs, every idle charge/discharge round trip is
    # cost-neutral; the returned schedule must carry none of them
    grid = TimeGrid(horizon_slots=6)
    pev = make_pev([True] * 6, energy=1.8, v2g=True, soc=12.0)
    out = solve_p1(shaping(pev, [3.0] * 6, grid)).values
    assert out == pytest.approx([1.8, 0.0, 0.0, 0.0, 0.0, 0.0], abs=1e-12), out


def test_tied_discharge_slots_pick_the_earliest():
    # charge 1.8 in each cheap slot, sell 1.8 at 9.0; slots 2 and 3 tie
    grid = TimeGrid(horizon_slots=4)
    pev = make_pev([True] * 4, energy=1.8, v2g=True, soc=8.4)
    out = solve_p1(shaping(pev, [-5.0, -5.0, 9.0, 9.0], grid)).values
    assert out == pytest.approx([1.8, 1.8, -1.8, 0.0], abs=1e-12), out


def test_zero_remaining_energy_comes_back_exactly_zero():
    # battery full when the event hits: the only optimum is all-idle and the
    # suffix must be exact zeros, not solver dust (a slack face row once let
    # the ratio test amplify 1e-12 into 5e-7 here)
    grid = TimeGrid(horizon_slots=4)
    pev = make_pev([True] * 4, energy=3.6, capacity=4.5, soc=0.9)
    inst = altering(pev, [0.108, 0.126, 0.1081, 0.126], [1.8, 1.8], 2, 0.01, grid)
    out = solve_p2(inst).values
    assert (out[2:] == 0.0).all(), out


def test_infeasible_energy_names_user_and_gap():
    pev = make_pev([True, False, False], energy=3.0, user_id="late_arrival")
    with pytest.raises(InfeasibleInstanceError, match="late_arrival"):
        solve_p1(shaping(pev, [1.0, 1.0, 1.0], GRID3))


def test_unreachable_soc_band_is_named():
    # floor needs 2.0 kWh recovered in the first slot but cap is 1.8
    grid = TimeGrid(horizon_slots=2)
    pev = make_pev([True, True], energy=2.0, soc=2.8)
    with pytest.raises(InfeasibleInstanceError, match="unreachable"):
        solve_p1(shaping(pev, [1.0, 1.0], grid))


# ------------------------------------------------------------------
# hand-worked altering cases
# ------------------------------------------------------------------

def test_altering_blend_half_prefers_later_slot():
    # suffix costs 0.5*[2, 1] + [0.5, 0] = [1.5, 0.5]: everything after t0
    pev = make_pev([True] * 3, energy=1.8)
    inst = altering(pev, [0.0, 2.0, 1.0], prefix=[0.0], t0=1, lam=0.5, grid=GRID3)
    out = solve_p2(inst).values
    assert np.allclose(out, [0.0, 0.0, 1.8], atol=1e-9), out

    restricted = make_pev([False, True, True], energy=1.8)
    oracle = brute_force_schedule(
        restricted,
        0.5 * np.array([0.0, 2.0, 1.0]),
        extra_t0_weight=(1, 0.5),
        grid=GRID3,
    )
    delta = lattice_bound(restricted, np.array([0.0, 1.0, 0.5]), 9, GRID3)
    lp_obj = 0.5 * np.dot(out, [0.0, 2.0, 1.0]) + 0.5 * out[1]
    oracle_obj = np.dot(oracle.values, [0.0, 1.0, 0.5]) + 0.5 * oracle.values[1]
    assert lp_obj <= oracle_obj + delta + 1e-9


def test_altering_ignores_tracking_at_lam_zero():
    # lam=0 cares only about the aggregate at t0: discharge at full power
    pev = make_pev([True] * 3, energy=0.6, v2g=True, soc=12.0)
    inst = altering(pev, [0.0, 0.0, 0.0], prefix=[0.6], t0=1, lam=0.0, grid=GRID3)
    out = solve_p2(inst).values
    assert out[0] == 0.6
    assert out[1] == pytest.approx(-1.8, abs=1e-9)
    assert out.sum() == pytest.approx(0.6, abs=1e-9)


def test_altering_keeps_prefix_verbatim():
    pev = make_pev([True] * 3, energy=1.8)
    prefix = np.array([1.3])
    inst = altering(pev, [0.0, 1.0, 2.0], prefix=prefix, t0=1, lam=0.7, grid=GRID3)
    out = solve_p2(inst).values
    assert out[0] == prefix[0]
    assert out.sum() == pytest.approx(1.8, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_altering_at_lam_one_is_restricted_shaping(seed):
    rng = np.random.default_rng(seed)
    h, t0 = 5, 2
    grid = TimeGrid(horizon_slots=h)
    v2g = bool(seed % 2)
    # keep energy above the largest possible frozen prefix (2 * 1.8) so the
    # restricted problem never needs a negative session total
    energy = float(rng.uniform(3.7, 5.0))
    soc = float(rng.uniform(6.0, 24.0 - energy))
    pev = make_pev([True] * h, energy, v2g=v2g, soc=soc, user_id=f"r{seed}")
    costs = rng.uniform(-2.0, 2.0, size=h)

    full = solve_p1(shaping(pev, costs, grid)).values
    prefix = full[:t0].copy()
    prefix_energy = float(prefix.sum())

    out = solve_p2(altering(pev, costs, prefix, t0, 1.0, grid)).values
    assert np.array_equal(out[:t0], prefix)

    restricted = PevSpec(
        user_id=pev.user_id,
        permissible_slots=np.arange(h) >= t0,
        required_energy_kwh=energy - prefix_energy,
        max_power_kw=1.8,
        capacity_kwh=24.0,
        soc_arrival_kwh=soc + prefix_energy,
        v2g_enabled=v2g,
    )
    ref = solve_p1(shaping(restricted, costs, grid)).values
    assert np.allclose(out[t0:], ref[t0:], atol=1e-9), (out, ref)


def test_altering_validation():
    pev = make_pev([True] * 3, energy=1.8)
    with pytest.raises(DimensionMismatchError):
        altering(pev, [0.0] * 3, prefix=[0.0, 0.0], t0=1, lam=0.5, grid=GRID3)
    with pytest.raises(ValueError, match="t0"):
        altering(pev, [0.0] * 3, prefix=[0.0] * 3, t0=3, lam=0.5, grid=GRID3)
    with pytest.raises(ValueError, match="lam"):
        altering(pev, [0.0] * 3, prefix=[0.0], t0=1, lam=1.5, grid=GRID3)
    gated = make_pev([False, True, True], energy=1.8)
    with pytest.raises(ValueError, match="outside the window"):
        altering(gated, [0.0] * 3, prefix=[0.5], t0=1, lam=0.5, grid=GRID3)


# ------------------------------------------------------------------
# oracle behaviour and randomized equivalence
# ------------------------------------------------------------------

def test_oracle_refuses_large_instances():
    grid7 = TimeGrid(horizon_slots=7)
    pev = make_pev([True] * 7, energy=1.8)
    with pytest.raises(ValueError, match="refused"):
        brute_force_schedule(pev, np.zeros(7), grid=grid7)
    pev3 = make_pev([True] * 3, energy=1.8)
    with pytest.raises(ValueError, match="refused"):
        brute_force_schedule(pev3, np.zeros(3), grid_levels=10, grid=GRID3)


def test_lattice_helpers():
    pev = make_pev([True] * 3, energy=1.8)
    assert lattice_step(pev, 9, GRID3) == pytest.approx(0.45)
    c = np.array([1.0, -3.0, 2.0])
    assert lattice_bound(pev, c, 9, GRID3) == pytest.approx(3 * 0.45 * 3.0)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(2, 5))
    grid = TimeGrid(horizon_slots=h)
    mask = rng.random(h) < 0.75
    if not mask.any():
        mask[int(rng.integers(0, h))] = True
    v2g = bool(rng.integers(0, 2))
    energy = float(rng.uniform(0.0, 0.9 * 1.8 * mask.sum()))
    soc = float(rng.uniform(4.8, 24.0 - energy))
    pev = PevSpec(f"s{seed}", mask, energy, 1.8, 24.0, soc, v2g_enabled=v2g)
    costs = rng.uniform(-3.0, 3.0, size=h)
    levels = int(rng.choice([3, 5, 9]))
    return pev, costs, levels, grid


@pytest.mark.parametrize("seed", range(30))
def test_lp_beats_lattice_oracle_within_delta(seed):
    pev, costs, levels, grid = random_instance(seed)
    inst = shaping(pev, costs, grid)
    lp = solve_p1(inst)
    report = check_feasibility(pev, lp, grid)
    assert report.is_feasible, report.summary()
    oracle = brute_force_schedule(pev, costs, grid_levels=levels, grid=grid)
    delta = lattice_bound(pev, costs, levels, grid)
    assert p1_objective(inst, lp.values) <= p1_objective(inst, oracle.values) + delta + 1e-9


@pytest.mark.parametrize("seed", range(103, 113))
def test_no_v2g_oracle_tracks_sorted_greedy(seed):
    rng = np.random.default_rng(seed)
    h = 4
    grid = TimeGrid(horizon_slots=h)
    energy = float(rng.uniform(0.5, 0.9 * 1.8 * h))
    pev = make_pev([True] * h, energy, user_id=f"g{seed}")
    costs = rng.uniform(-3.0, 3.0, size=h)
    # continuous optimum: cheapest slots first, SOC never binds here
    remaining, greedy_obj = energy, 0.0
    for i in np.argsort(costs, kind="stable"):
        take = min(1.8, remaining)
        greedy_obj += take * costs[i]
        remaining -= take
        if remaining <= 0:
            break
    inst = shaping(pev, costs, grid)
    assert p1_objective(inst, solve_p1(inst).values) == pytest.approx(greedy_obj, abs=1e-9)
    oracle = brute_force_schedule(pev, costs, grid=grid)
    delta = lattice_bound(pev, costs, 9, grid)
    assert abs(p1_objective(inst, oracle.values) - greedy_obj) <= delta + 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_shaping_solution_always_feasible_and_beats_greedy(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(3, 8))
    grid = TimeGrid(horizon_slots=h)
    mask = rng.random(h) < 0.8
    if not mask.any():
        mask[0] = True
    energy = float(rng.uniform(0.0, 1.8 * mask.sum()))
    energy = min(energy, 19.2)
    pev = PevSpec(f"h{seed}", mask, energy, 1.8, 24.0, 24.0 - energy)
    costs = rng.uniform(-3.0, 3.0, size=h)
    inst = shaping(pev, costs, grid)
    out = solve_p1(inst)
    report = check_feasibility(pev, out, grid)
    assert report.is_feasible, report.summary()
    competitor = greedy_fill(pev, grid)
    assert p1_objective(inst, out.values) <= p1_objective(inst, competitor.values) + 1e-9


def test_p2_objective_reports_full_value():
    pev = make_pev([True] * 3, energy=1.8)
    inst = AlteringInstance(
        pev=pev,
        household_load_kwh=np.array([1.0, 2.0, 1.0]),
        others_aggregate_kwh=np.array([5.0, 6.0, 5.0]),
        target_kwh=np.zeros(3),
        frozen_prefix_kwh=np.array([0.0]),
        t0=1,
        lam=0.5,
        grid=GRID3,
    )
    values = np.array([0.0, 1.8, 0.0])
    # 0.5 * <values, c> + 0.5 * (6 + 2 + 1.8) with c = household + others
    expected = 0.5 * (1.8 * 8.0) + 0.5 * 9.8
    assert p2_objective(inst, values) == pytest.approx(expected)
