"""Scenario configuration: one JSON file describing a full day's run.

Paths inside the file are resolved relative to the file itself, so a config
can travel with its fixture CSVs.  CLI overrides (seed, lambda, t0, output
directory) are applied here, not sprinkled through the pipeline; forcing a
t0 replaces the trigger rule with a manual one.

Strictness matches dataio: unknown keys are rejected rather than ignored,
because a typo like "mse_tolerence" silently falling back to a default is
the worst possible failure mode for a reproducibility tool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .coordinator import AlterTriggerRule, ConvergencePolicy, StopMode, TriggerMode
from .core import TimeGrid
from .dataio import load_distribution_csv, load_prices_csv, load_profile_csv
from .scenario import FleetConfig, TargetMode


class ConfigError(ValueError):
    """Bad scenario config; message names the offending key or file."""


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    grid: TimeGrid
    fleet: FleetConfig
    da_price_per_mwh: np.ndarray
    rt_price_per_mwh: np.ndarray
    da_purchased_kwh: np.ndarray | None  # None: purchase the built target
    target_mode: TargetMode
    external_target_kwh: np.ndarray | None
    policy: ConvergencePolicy
    trigger: AlterTriggerRule
    lam: float
    output_dir: Path
    notes: str = ""

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")


def _require_keys(section: dict, allowed: set[str], required: set[str],
                  where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key {sorted(unknown)[0]!r}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"{where}: missing key {sorted(missing)[0]!r}")


def _enum_by_value(enum_cls, raw: str, where: str):
    try:
        return enum_cls(raw)
    except ValueError:
        valid = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{where}: {raw!r} not one of {valid}") from None


def load_config(
    path: str | Path,
    *,
    seed: int | None = None,
    lam: float | None = None,
    t0: int | None = None,
    out: str | Path | None = None,
) -> ScenarioConfig:
    """Parse and materialize a scenario config, applying CLI overrides."""
    path = Path(path)
    base = path.parent
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc

    _require_keys(
        raw,
        allowed={"notes", "seed", "horizon_slots", "slot_hours", "fleet",
                 "market", "target", "policy", "trigger", "lambda",
                 "output_dir"},
        required={"seed", "fleet", "market", "target", "output_dir"},
        where=str(path),
    )
    grid = TimeGrid(
        horizon_slots=int(raw.get("horizon_slots", 24)),
        slot_hours=float(raw.get("slot_hours", 1.0)),
    )
    effective_seed = int(raw["seed"]) if seed is None else int(seed)

    fleet_raw = raw["fleet"]
    _require_keys(
        fleet_raw,
        allowed={"n_users", "v2g_fraction", "charge_rate_kw", "capacity_kwh",
                 "min_soc_fraction", "arrival_dist", "departure_dist",
                 "charging_hours_dist", "household_profile"},
        required={"n_users", "v2g_fraction", "arrival_dist", "departure_dist",
                  "charging_hours_dist", "household_profile"},
        where=f"{path}: fleet",
    )
    fleet = FleetConfig(
        n_users=int(fleet_raw["n_users"]),
        v2g_fraction=float(fleet_raw["v2g_fraction"]),
        arrival_dist=load_distribution_csv(base / fleet_raw["arrival_dist"]),
        departure_dist=load_distribution_csv(base / fleet_raw["departure_dist"]),
        charging_hours_dist=load_distribution_csv(
            base / fleet_raw["charging_hours_dist"]
        ),
        household_base_kwh=load_profile_csv(
            base / fleet_raw["household_profile"], grid.horizon_slots
        ),
        seed=effective_seed,
        charge_rate_kw=float(fleet_raw.get("charge_rate_kw", 1.8)),
        capacity_kwh=float(fleet_raw.get("capacity_kwh", 24.0)),
        min_soc_fraction=float(fleet_raw.get("min_soc_fraction", 0.2)),
    )

    market_raw = raw["market"]
    _require_keys(
        market_raw,
        allowed={"da_price", "rt_price", "da_purchased"},
        required={"da_price", "rt_price", "da_purchased"},
        where=f"{path}: market",
    )
    da_price = load_prices_csv(base / market_raw["da_price"], grid.horizon_slots)
    rt_price = load_prices_csv(base / market_raw["rt_price"], grid.horizon_slots)
    if market_raw["da_purchased"] == "target":
        da_purchased = None
    else:
        da_purchased = load_profile_csv(
            base / market_raw["da_purchased"], grid.horizon_slots
        )

    target_raw = raw["target"]
    _require_keys(target_raw, allowed={"mode", "profile"}, required={"mode"},
                  where=f"{path}: target")
    target_mode = _enum_by_value(TargetMode, target_raw["mode"], f"{path}: target.mode")
    external_target = None
    if target_mode is TargetMode.EXTERNAL:
        if "profile" not in target_raw:
            raise ConfigError(f"{path}: target.profile required for external mode")
        external_target = load_profile_csv(
            base / target_raw["profile"], grid.horizon_slots
        )

    policy_raw = raw.get("policy", {})
    _require_keys(policy_raw,
                  allowed={"max_iterations", "mse_tolerance", "mode"},
                  required=set(), where=f"{path}: policy")
    policy = ConvergencePolicy(
        max_iterations=int(policy_raw.get("max_iterations", 5)),
        mse_tolerance=float(policy_raw.get("mse_tolerance", 1e-4)),
        mode=_enum_by_value(StopMode, policy_raw.get("mode", "whichever_first"),
                            f"{path}: policy.mode"),
    )

    trigger_raw = raw.get("trigger", {})
    _require_keys(trigger_raw,
                  allowed={"mode", "ratio_threshold", "spread_threshold_per_mwh",
                           "manual_t0"},
                  required=set(), where=f"{path}: trigger")
    trigger = AlterTriggerRule(
        mode=_enum_by_value(TriggerMode, trigger_raw.get("mode", "ratio"),
                            f"{path}: trigger.mode"),
        ratio_threshold=float(trigger_raw.get("ratio_threshold", 3.0)),
        spread_threshold_per_mwh=float(
            trigger_raw.get("spread_threshold_per_mwh", 100.0)
        ),
        manual_t0=(None if trigger_raw.get("manual_t0") is None
                   else int(trigger_raw["manual_t0"])),
    )
    if t0 is not None:
        trigger = AlterTriggerRule(mode=TriggerMode.MANUAL, manual_t0=int(t0))

    effective_lam = float(raw.get("lambda", 0.5)) if lam is None else float(lam)
    output_dir = Path(out) if out is not None else base / raw["output_dir"]

    return ScenarioConfig(
        seed=effective_seed,
        grid=grid,
        fleet=fleet,
        da_price_per_mwh=da_price,
        rt_price_per_mwh=rt_price,
        da_purchased_kwh=da_purchased,
        target_mode=target_mode,
        external_target_kwh=external_target,
        policy=policy,
        trigger=trigger,
        lam=effective_lam,
        output_dir=output_dir,
        notes=str(raw.get("notes", "")),
    )


def with_overrides(config: ScenarioConfig, **changes) -> ScenarioConfig:
    """Dataclass replace that keeps the fleet seed in sync with the run seed."""
    updated = replace(config, **changes)
    if "seed" in changes:
        updated = replace(updated, fleet=replace(updated.fleet, seed=updated.seed))
    return updated
