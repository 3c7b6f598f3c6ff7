"""Two-settlement cost accounting and the uncoordinated baseline.

Money flows in USD; prices arrive in $/MWh while all load vectors are kWh,
so every inner product carries a /1000.  Imbalance is signed: a slot drawing
less than the day-ahead purchase earns revenue at the real-time price, the
sell-back working exactly like the buy side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .core import (
    DimensionMismatchError,
    FleetState,
    MarketDay,
    TimeGrid,
    UserProfile,
    greedy_fill,
)
from .coordinator import (
    AlterTriggerRule,
    ConvergencePolicy,
    ShapedOutcome,
    detect_t0,
    run_altering,
    run_shaping,
)

_KWH_PER_MWH = 1000.0


@dataclass(frozen=True)
class Settlement:
    da_cost_usd: float
    rt_cost_usd: float
    total_usd: float
    imbalance_kwh: np.ndarray

    def __post_init__(self):
        if abs(self.total_usd - (self.da_cost_usd + self.rt_cost_usd)) > 1e-9:
            raise ValueError("total_usd must equal da + rt cost")
        arr = np.asarray(self.imbalance_kwh, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "imbalance_kwh", arr)


def settle(aggregate_kwh: np.ndarray, market: MarketDay) -> Settlement:
    """Price an aggregate against one market day."""
    aggregate_kwh = np.asarray(aggregate_kwh, dtype=float)
    if aggregate_kwh.shape != market.da_purchased_kwh.shape:
        raise DimensionMismatchError(
            f"aggregate length {aggregate_kwh.shape} vs market "
            f"{market.da_purchased_kwh.shape}"
        )
    imbalance = aggregate_kwh - market.da_purchased_kwh
    da_cost = float(market.da_purchased_kwh @ market.da_price_per_mwh) / _KWH_PER_MWH
    rt_cost = float(imbalance @ market.rt_price_per_mwh) / _KWH_PER_MWH
    return Settlement(da_cost, rt_cost, da_cost + rt_cost, imbalance)


def uncoordinated_baseline(users: Sequence[UserProfile], grid: TimeGrid) -> FleetState:
    """Plug-and-charge fleet: every PEV charges at full rate on arrival."""
    schedules = {u.user_id: greedy_fill(u.pev, grid) for u in users}
    return FleetState.build(users, schedules, grid)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one day end to end, market data aside."""

    users: tuple[UserProfile, ...]
    target_kwh: np.ndarray
    grid: TimeGrid = TimeGrid()
    lam: float = 0.5
    initializer: str = "greedy"

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        target = self.grid.require_length(self.target_kwh, "target_kwh")
        target.setflags(write=False)
        object.__setattr__(self, "target_kwh", target)
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class CostChainReport:
    """Costs of the same fleet under no coordination, shaping, and altering."""

    uncoordinated: Settlement
    shaped: Settlement
    altered: Settlement
    t0: int | None

    @property
    def cost_uncoordinated(self) -> float:
        return self.uncoordinated.total_usd

    @property
    def cost_after_p1(self) -> float:
        return self.shaped.total_usd

    @property
    def cost_after_p2(self) -> float:
        return self.altered.total_usd

    @property
    def savings_shaping_pct(self) -> float:
        return _pct_drop(self.cost_uncoordinated, self.cost_after_p1)

    @property
    def savings_altering_pct(self) -> float:
        return _pct_drop(self.cost_after_p1, self.cost_after_p2)

    def rows(self) -> list[tuple[str, float, float, float]]:
        """(stage, da_usd, rt_usd, total_usd) per stage, for tabular output."""
        return [
            ("uncoordinated", self.uncoordinated.da_cost_usd,
             self.uncoordinated.rt_cost_usd, self.uncoordinated.total_usd),
            ("shaped", self.shaped.da_cost_usd,
             self.shaped.rt_cost_usd, self.shaped.total_usd),
            ("altered", self.altered.da_cost_usd,
             self.altered.rt_cost_usd, self.altered.total_usd),
        ]

    def to_text(self) -> str:
        lines = [
            f"cost_uncoordinated_usd = {self.cost_uncoordinated:.2f}",
            f"cost_after_p1_usd = {self.cost_after_p1:.2f}",
            f"cost_after_p2_usd = {self.cost_after_p2:.2f}",
            f"savings_shaping_pct = {self.savings_shaping_pct:.2f}",
            f"savings_altering_pct = {self.savings_altering_pct:.2f}",
            f"t0 = {'none' if self.t0 is None else self.t0}",
        ]
        return "\n".join(lines) + "\n"


def _pct_drop(before: float, after: float) -> float:
    if abs(before) < 1e-12:
        return 0.0
    return 100.0 * (1.0 - after / before)


def cost_chain(
    scenario: Scenario,
    market: MarketDay,
    policy: ConvergencePolicy = ConvergencePolicy(),
    trigger: AlterTriggerRule = AlterTriggerRule(),
    *,
    event_sink: IO[str] | None = None,
) -> CostChainReport:
    """Baseline, shape, then alter (if a price event fires); settle all three.

    With no qualifying event the altered stage repeats the shaped one, so
    cost_after_p2 == cost_after_p1 by construction.
    """
    grid = scenario.grid
    base = uncoordinated_baseline(scenario.users, grid)
    shaped = run_shaping(
        scenario.users, scenario.target_kwh, policy, scenario.initializer,
        grid=grid, event_sink=event_sink,
    )
    t0 = detect_t0(market, grid.horizon_slots, trigger)
    if t0 is None:
        altered: ShapedOutcome = shaped
    else:
        altered = run_altering(
            shaped, t0, scenario.lam, policy,
            target_kwh=scenario.target_kwh, grid=grid, event_sink=event_sink,
        )
    return CostChainReport(
        uncoordinated=settle(base.aggregate_kwh, market),
        shaped=settle(shaped.fleet.aggregate_kwh, market),
        altered=settle(altered.fleet.aggregate_kwh, market),
        t0=t0,
    )
