"""Synthetic fleet construction and target profiles.

Sampling is reproducible by contract: numpy's default_rng (PCG64) seeded
from FleetConfig.seed, with a fixed draw order: V2G membership first (one
permutation), then per user a household scale factor followed by the
rejection loop drawing (arrival, departure, charging hours) per attempt.
Changing that order changes fleets, so treat it as part of the format.

Usage patterns come from three tabulated marginal distributions (arrival
slot, departure slot, required charging hours), sampled independently;
draws whose window cannot deliver the implied energy are rejected and
redrawn.  Session energy is charge rate times required hours, and arrival
SOC is whatever is missing from a full battery.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ENERGY_TOL, PevSpec, TimeGrid, UserProfile

_MAX_REJECTIONS = 1000
_FILL_TOL_KWH = 1e-6


class DistributionError(ValueError):
    """Malformed tabulated distribution."""


@dataclass(frozen=True)
class TabulatedDistribution:
    """Discrete distribution over integer values, sampled by inverse CDF."""

    values: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=int)
        probs = np.asarray(self.probabilities, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise DistributionError("values and probabilities must be equal-length 1-d")
        if len(np.unique(values)) != values.size:
            raise DistributionError("duplicate values in distribution table")
        if (probs < 0).any():
            raise DistributionError("negative probability")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise DistributionError(f"probabilities sum to {probs.sum()!r}, not 1")
        values.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "TabulatedDistribution":
        pairs = list(pairs)
        return cls(
            np.array([v for v, _ in pairs]),
            np.array([p for _, p in pairs]),
        )

    def sample(self, rng: np.random.Generator) -> int:
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(self.probabilities), u, side="right"))
        return int(self.values[min(idx, self.values.size - 1)])


@dataclass(frozen=True)
class FleetConfig:
    n_users: int
    v2g_fraction: float
    arrival_dist: TabulatedDistribution
    departure_dist: TabulatedDistribution
    charging_hours_dist: TabulatedDistribution
    household_base_kwh: np.ndarray
    seed: int
    charge_rate_kw: float = 1.8
    capacity_kwh: float = 24.0
    min_soc_fraction: float = 0.2

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError(f"n_users must be >= 1, got {self.n_users}")
        if not 0.0 <= self.v2g_fraction <= 1.0:
            raise ValueError(f"v2g_fraction must be in [0, 1], got {self.v2g_fraction}")
        if self.charge_rate_kw <= 0 or self.capacity_kwh <= 0:
            raise ValueError("charge_rate_kw and capacity_kwh must be positive")
        base = np.asarray(self.household_base_kwh, dtype=float)
        if (base < 0).any():
            raise ValueError("household_base_kwh must be nonnegative")
        base.setflags(write=False)
        object.__setattr__(self, "household_base_kwh", base)


def connection_mask(arrival: int, departure: int, horizon: int) -> np.ndarray:
    """Boolean mask for the cyclic window arrival..departure inclusive."""
    if not (0 <= arrival < horizon and 0 <= departure < horizon):
        raise ValueError(
            f"window [{arrival}, {departure}] outside horizon {horizon}"
        )
    length = (departure - arrival) % horizon + 1
    mask = np.zeros(horizon, dtype=bool)
    mask[(arrival + np.arange(length)) % horizon] = True
    return mask


def sample_fleet(config: FleetConfig, grid: TimeGrid = TimeGrid()) -> list[UserProfile]:
    """Draw a reproducible fleet of UserProfiles from the config."""
    h = grid.horizon_slots
    base = grid.require_length(config.household_base_kwh, "household_base_kwh")
    rng = np.random.default_rng(config.seed)
    n = config.n_users
    v2g_count = int(round(config.v2g_fraction * n))
    v2g_flags = np.zeros(n, dtype=bool)
    v2g_flags[rng.permutation(n)[:v2g_count]] = True

    cap_per_slot = config.charge_rate_kw * grid.slot_hours
    max_session_kwh = config.capacity_kwh * (1.0 - config.min_soc_fraction)
    users = []
    for i in range(n):
        scale = rng.uniform(0.85, 1.15)
        for attempt in range(_MAX_REJECTIONS):
            arrival = config.arrival_dist.sample(rng)
            departure = config.departure_dist.sample(rng)
            hours = config.charging_hours_dist.sample(rng)
            mask = connection_mask(arrival, departure, h)
            energy = config.charge_rate_kw * hours
            if energy > max_session_kwh + ENERGY_TOL:
                continue
            if energy > cap_per_slot * int(mask.sum()) + ENERGY_TOL:
                continue
            break
        else:
            raise RuntimeError(
                f"user {i}: no feasible (arrival, departure, hours) draw in "
                f"{_MAX_REJECTIONS} attempts; check the distribution tables"
            )
        pev = PevSpec(
            user_id=f"u{i:04d}",
            permissible_slots=mask,
            required_energy_kwh=energy,
            max_power_kw=config.charge_rate_kw,
            capacity_kwh=config.capacity_kwh,
            soc_arrival_kwh=config.capacity_kwh - energy,
            v2g_enabled=bool(v2g_flags[i]),
            min_soc_fraction=config.min_soc_fraction,
        )
        users.append(UserProfile(pev, scale * base))
    return users


def availability_histogram(users: Sequence[UserProfile],
                           grid: TimeGrid = TimeGrid()) -> np.ndarray:
    """How many PEVs are plugged in at each slot."""
    counts = np.zeros(grid.horizon_slots, dtype=int)
    for u in users:
        counts += u.pev.permissible_slots
    return counts


class TargetMode(enum.Enum):
    EXTERNAL = "external"
    VALLEY_FILL = "valley_fill"
    SCALED_HOUSEHOLD = "scaled_household"


def valley_fill_level(household_kwh: np.ndarray, fleet_energy_kwh: float) -> float:
    """Water level L with sum(max(0, L - household)) == fleet energy.

    The fill volume is continuous and strictly increasing in L once L clears
    the valley floor, so bisection cannot miss.  The loop runs until the
    bracket collapses to adjacent floats rather than stopping at a volume
    tolerance: downstream the residual target - aggregate must sit below
    solver tolerances, or coordinated users start trading against it.
    """
    household_kwh = np.asarray(household_kwh, dtype=float)
    if fleet_energy_kwh < 0:
        raise ValueError(f"fleet energy must be >= 0, got {fleet_energy_kwh}")
    if fleet_energy_kwh == 0.0:
        return float(household_kwh.min())

    def volume(level: float) -> float:
        return float(np.maximum(0.0, level - household_kwh).sum())

    lo = float(household_kwh.min())
    hi = float(household_kwh.max()) + fleet_energy_kwh
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if volume(mid) < fleet_energy_kwh:
            lo = mid
        else:
            hi = mid
    return hi


def make_target(
    mode: TargetMode,
    *,
    household_kwh: np.ndarray | None = None,
    fleet_energy_kwh: float = 0.0,
    external_kwh: np.ndarray | None = None,
    grid: TimeGrid = TimeGrid(),
) -> np.ndarray:
    """Build the profile the retailer purchases day-ahead."""
    if mode is TargetMode.EXTERNAL:
        if external_kwh is None:
            raise ValueError("external mode needs external_kwh")
        return grid.require_length(external_kwh, "external_kwh")
    if household_kwh is None:
        raise ValueError(f"{mode.value} mode needs household_kwh")
    household_kwh = grid.require_length(household_kwh, "household_kwh")
    if mode is TargetMode.VALLEY_FILL:
        level = valley_fill_level(household_kwh, fleet_energy_kwh)
        return np.maximum(household_kwh, level)
    if mode is TargetMode.SCALED_HOUSEHOLD:
        total = float(household_kwh.sum())
        if total <= 0:
            raise ValueError("scaled_household needs a nonzero household shape")
        return household_kwh * ((total + fleet_energy_kwh) / total)
    raise ValueError(f"unknown target mode {mode!r}")  # pragma: no cover
