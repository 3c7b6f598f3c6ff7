"""Dense two-phase simplex for the small per-user linear programs.

The per-user scheduling problems are tiny (a few dozen variables and rows), so
a plain tableau implementation is fast enough and buys two properties that an
external solver would not pin down:

* exactness: vertex optima, no interior-point smoothing, no heuristics;
* determinism: Bland's rule (lowest eligible index enters; ties in the ratio
  test broken by lowest basic index) makes the pivot sequence, and therefore
  the returned vertex, a pure function of the input.  Bland's rule also rules
  out cycling on the degenerate instances that equal-cost slots produce.

Interface mirrors the usual standard form: minimize c.x subject to
A_ub x <= b_ub, A_eq x = b_eq, x >= 0.
"""

from __future__ import annotations

import numpy as np

_TOL = 1e-9
_MAX_PIVOTS = 20000


class LpInfeasibleError(ValueError):
    """Phase 1 terminated with artificial variables still positive."""


class LpUnboundedError(ValueError):
    """An improving column has no blocking row."""


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    # Pivoting rounds the column to dust around exact 0/1; snap it.
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    basis[row] = col


def _run(tableau: np.ndarray, basis: np.ndarray, allowed: np.ndarray) -> None:
    """Pivot to optimality for the objective in the last tableau row."""
    m = tableau.shape[0] - 1
    for _ in range(_MAX_PIVOTS):
        reduced = tableau[-1, :-1]
        eligible = np.flatnonzero(allowed & (reduced < -_TOL))
        if eligible.size == 0:
            return
        col = int(eligible[0])  # Bland: lowest index enters
        column = tableau[:m, col]
        rows = np.flatnonzero(column > _TOL)
        if rows.size == 0:
            raise LpUnboundedError(f"column {col} is unbounded")
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        near = rows[ratios <= best + 1e-10 * (1.0 + abs(best))]
        row = int(near[np.argmin(basis[near])])  # Bland: lowest basic leaves
        _pivot(tableau, basis, row, col)
    raise RuntimeError("simplex exceeded pivot budget")


def solve_lp(
    c: np.ndarray,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize ``c.x`` over ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``.

    Returns the optimal vertex.  Raises LpInfeasibleError / LpUnboundedError.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq

    rows = np.hstack([np.vstack([a_ub, a_eq]), np.zeros((m, m_ub))])
    rows[:m_ub, n : n + m_ub] = np.eye(m_ub)  # slack columns
    rhs = np.concatenate([b_ub, b_eq])

    negative = rhs < 0
    rows[negative] *= -1.0
    rhs = np.where(negative, -rhs, rhs)

    # Rows that kept a +1 slack start basic on it; the rest need artificials.
    needs_artificial = np.ones(m, dtype=bool)
    basis = np.full(m, -1)
    for i in range(m_ub):
        if not negative[i]:
            basis[i] = n + i
            needs_artificial[i] = False
    art_rows = np.flatnonzero(needs_artificial)
    n_art = art_rows.size
    ncols = n + m_ub + n_art

    tableau = np.zeros((m + 1, ncols + 1))
    tableau[:m, : n + m_ub] = rows
    tableau[:m, -1] = rhs
    for k, i in enumerate(art_rows):
        col = n + m_ub + k
        tableau[i, col] = 1.0
        basis[i] = col

    allowed = np.ones(ncols, dtype=bool)
    if n_art:
        # Phase 1: minimize the artificial total.
        tableau[-1, n + m_ub :-1] = 1.0
        for i in art_rows:
            tableau[-1] -= tableau[i]
        _run(tableau, basis, allowed)
        if -tableau[-1, -1] > 1e-7:
            raise LpInfeasibleError(
                f"no feasible point (phase-1 residual {-tableau[-1, -1]:.3g})"
            )
        allowed[n + m_ub :] = False
        for i in range(m):
            if basis[i] >= n + m_ub:
                # Degenerate artificial at zero: pivot it out if any real
                # column survives in this row, else the row is redundant.
                candidates = np.flatnonzero(
                    allowed[: n + m_ub] & (np.abs(tableau[i, : n + m_ub]) > _TOL)
                )
                if candidates.size:
                    _pivot(tableau, basis, i, int(candidates[0]))

    # Phase 2: original objective over the current basis.
    tableau[-1, :] = 0.0
    tableau[-1, :n] = c
    for i in range(m):
        if basis[i] < n and c[basis[i]] != 0.0:
            tableau[-1] -= c[basis[i]] * tableau[i]
    _run(tableau, basis, allowed)

    x = np.zeros(ncols)
    x[basis] = tableau[:m, -1]
    return np.maximum(x[:n], 0.0)
