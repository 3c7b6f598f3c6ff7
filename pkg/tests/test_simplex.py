"""Simplex solver tests.

Oracles:
  * hand-computed optima for tiny LPs (worked by hand, frozen here),
  * a sorted-greedy oracle for min-cost allocation under a sum
    constraint with per-variable caps, which the simplex must match.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridshaper.simplex import LpInfeasibleError, LpUnboundedError, solve_lp


def _empty(n):
    return np.zeros((0, n)), np.zeros(0)


def greedy_allocation_cost(costs, cap, total):
    """Cheapest-first fill; exact optimum for this constraint shape."""
    remaining = total
    cost = 0.0
    for i in np.argsort(costs, kind="stable"):
        take = min(cap, remaining)
        cost += take * costs[i]
        remaining -= take
        if remaining <= 0:
            break
    return cost


def test_two_variable_vertex_optimum():
    # min -x0 - 2*x1 s.t. x0 + x1 <= 4, x1 <= 3; optimum (1, 3), value -7
    c = np.array([-1.0, -2.0])
    a_ub = np.array([[1.0, 1.0], [0.0, 1.0]])
    b_ub = np.array([4.0, 3.0])
    x = solve_lp(c, a_ub, b_ub, *_empty(2))
    assert np.allclose(x, [1.0, 3.0], atol=1e-9), x


def test_equality_with_caps():
    # min 5*x0 + 1*x1 + 3*x2, sum = 1.8, each <= 1.8: all goes to x1
    c = np.array([5.0, 1.0, 3.0])
    a_ub = np.eye(3)
    b_ub = np.full(3, 1.8)
    a_eq = np.ones((1, 3))
    b_eq = np.array([1.8])
    x = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    assert np.allclose(x, [0.0, 1.8, 0.0], atol=1e-9), x


def test_tied_costs_resolve_to_lowest_index():
    c = np.ones(3)
    a_ub = np.eye(3)
    b_ub = np.full(3, 1.8)
    a_eq = np.ones((1, 3))
    b_eq = np.array([1.8])
    x = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    assert np.allclose(x, [1.8, 0.0, 0.0], atol=1e-9), x


def test_infeasible_raises():
    a_ub = np.array([[1.0, 1.0]])
    b_ub = np.array([1.0])
    a_eq = np.array([[1.0, 1.0]])
    b_eq = np.array([2.0])
    with pytest.raises(LpInfeasibleError):
        solve_lp(np.zeros(2), a_ub, b_ub, a_eq, b_eq)


def test_unbounded_raises():
    with pytest.raises(LpUnboundedError):
        solve_lp(np.array([-1.0]), *_empty(1), *_empty(1))


def test_redundant_equality_rows_tolerated():
    c = np.array([1.0, 2.0])
    a_eq = np.array([[1.0, 1.0], [2.0, 2.0]])
    b_eq = np.array([3.0, 6.0])
    a_ub = np.eye(2)
    b_ub = np.array([3.0, 3.0])
    x = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    assert np.allclose(x, [3.0, 0.0], atol=1e-9), x


def test_negative_rhs_inequality():
    # x0 - x1 <= -1 with sum = 2: forces x1 - x0 >= 1
    c = np.array([0.0, 1.0])
    a_ub = np.array([[1.0, -1.0]])
    b_ub = np.array([-1.0])
    a_eq = np.ones((1, 2))
    b_eq = np.array([2.0])
    x = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    assert np.allclose(x, [0.5, 1.5], atol=1e-9), x


def test_repeat_solve_is_bit_identical():
    rng = np.random.default_rng(11)
    c = rng.normal(size=6)
    a_ub = np.vstack([np.eye(6), -np.eye(6)])
    b_ub = np.concatenate([np.full(6, 1.8), np.full(6, 1.8)])
    a_eq = np.ones((1, 6))
    b_eq = np.array([2.5])
    first = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    second = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
    assert first.tobytes() == second.tobytes()


@settings(max_examples=120, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 8),
    frac=st.floats(0.0, 1.0),
)
def test_matches_greedy_allocation_oracle(seed, n, frac):
    rng = np.random.default_rng(seed)
    costs = rng.uniform(-3.0, 3.0, size=n)
    cap = 1.8
    total = frac * n * cap
    a_ub = np.eye(n)
    b_ub = np.full(n, cap)
    a_eq = np.ones((1, n))
    b_eq = np.array([total])
    x = solve_lp(costs, a_ub, b_ub, a_eq, b_eq)
    assert np.all(x >= -1e-9) and np.all(x <= cap + 1e-9)
    assert x.sum() == pytest.approx(total, abs=1e-7)
    expected = greedy_allocation_cost(costs, cap, total)
    assert float(costs @ x) == pytest.approx(expected, abs=1e-7), (
        f"simplex {costs @ x} vs greedy {expected}"
    )
