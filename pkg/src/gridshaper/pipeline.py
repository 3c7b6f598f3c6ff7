"""Run-directory pipeline: gen -> shape -> alter -> settle -> report.

Each command reads the scenario config plus the artifacts of the previous
stage from the output directory, and writes its own artifacts back.  All
artifacts are plain CSV/JSON text, written deterministically (repr floats,
sorted keys, no timestamps), so identical config + seed gives byte-identical
runs.  A manifest.json records which command produced which file and the
schema tag each was written under.

Missing prerequisites raise ArtifactMissingError naming the command to run
first, rather than a bare file-not-found from somewhere inside a loader.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .coordinator import ShapedOutcome, detect_t0, run_altering, run_shaping
from .core import MarketDay
from .dataio import (
    fleet_from_artifacts,
    load_fleet_csv,
    load_profile_csv,
    write_fleet_csv,
    write_households_csv,
    write_profile_csv,
    write_schedules_csv,
    write_table,
)
from .scenario import TargetMode, availability_histogram, make_target, sample_fleet
from .settlement import (
    CostChainReport,
    settle,
    uncoordinated_baseline,
)

_MANIFEST = "manifest.json"
_SCHEMA = "gridshaper-run/v1"

# artifact -> (producing command, schema tag)
_ARTIFACTS = {
    "fleet.csv": ("gen", "fleet/v1"),
    "households.csv": ("gen", "household-long/v1"),
    "target.csv": ("gen", "profile/v1"),
    "da_purchased.csv": ("gen", "profile/v1"),
    "uncoordinated_schedules.csv": ("shape", "schedule-long/v1"),
    "uncoordinated_aggregate.csv": ("shape", "profile/v1"),
    "shaped_schedules.csv": ("shape", "schedule-long/v1"),
    "shaped_aggregate.csv": ("shape", "profile/v1"),
    "shaping_mse.csv": ("shape", "mse-trace/v1"),
    "events.jsonl": ("shape", "events/v1"),
    "altered_schedules.csv": ("alter", "schedule-long/v1"),
    "altered_aggregate.csv": ("alter", "profile/v1"),
    "altering_mse.csv": ("alter", "mse-trace/v1"),
    "alter_meta.json": ("alter", "alter-meta/v1"),
    "report.txt": ("settle", "report-kv/v1"),
    "report_stages.csv": ("settle", "report-stages/v1"),
    "series_aggregates.csv": ("report", "series/v1"),
    "series_availability.csv": ("report", "series/v1"),
    "series_mse.csv": ("report", "series/v1"),
    "series_slot_costs.csv": ("report", "series/v1"),
    "fig_aggregates.png": ("report", "figure/v1"),
    "fig_availability.png": ("report", "figure/v1"),
    "fig_mse.png": ("report", "figure/v1"),
    "fig_slot_costs.png": ("report", "figure/v1"),
}


class ArtifactMissingError(FileNotFoundError):
    """A required prior artifact is absent; the message names the fix."""


def _require(out_dir: Path, name: str) -> Path:
    path = out_dir / name
    if not path.exists():
        producer = _ARTIFACTS[name][0]
        raise ArtifactMissingError(
            f"missing artifact {name!r} in {out_dir}; "
            f"run 'gridshaper {producer}' first"
        )
    return path


def _record(out_dir: Path, config: ScenarioConfig, names: list[str]) -> None:
    manifest_path = out_dir / _MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    else:
        manifest = {"schema": _SCHEMA, "seed": config.seed, "artifacts": {}}
    manifest["seed"] = config.seed
    for name in names:
        command, schema = _ARTIFACTS[name]
        manifest["artifacts"][name] = {"command": command, "schema": schema}
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _market(config: ScenarioConfig, out_dir: Path) -> MarketDay:
    purchased = load_profile_csv(
        _require(out_dir, "da_purchased.csv"), config.grid.horizon_slots
    )
    return MarketDay(config.da_price_per_mwh, config.rt_price_per_mwh, purchased)


def _write_mse_csv(path: Path, phase: str, trace: tuple[float, ...]) -> None:
    write_table(path, ["phase", "sweep", "mse_kwh2"],
                [(phase, k + 1, float(v)) for k, v in enumerate(trace)])


def cmd_gen(config: ScenarioConfig) -> Path:
    """Sample the fleet and build the purchase target."""
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    users = sample_fleet(config.fleet, config.grid)
    household_total = np.sum([u.household_load_kwh for u in users], axis=0)
    fleet_energy = float(sum(u.pev.required_energy_kwh for u in users))
    target = make_target(
        config.target_mode,
        household_kwh=household_total,
        fleet_energy_kwh=fleet_energy,
        external_kwh=config.external_target_kwh,
        grid=config.grid,
    )
    purchased = target if config.da_purchased_kwh is None else config.da_purchased_kwh

    write_fleet_csv(out_dir / "fleet.csv", users)
    write_households_csv(out_dir / "households.csv", users)
    write_profile_csv(out_dir / "target.csv", target)
    write_profile_csv(out_dir / "da_purchased.csv", purchased)
    _record(out_dir, config,
            ["fleet.csv", "households.csv", "target.csv", "da_purchased.csv"])
    return out_dir


def _load_users_and_target(config: ScenarioConfig, out_dir: Path):
    users = load_fleet_csv(
        _require(out_dir, "fleet.csv"),
        _require(out_dir, "households.csv"),
        config.grid,
    )
    target = load_profile_csv(
        _require(out_dir, "target.csv"), config.grid.horizon_slots
    )
    return users, target


def cmd_shape(config: ScenarioConfig) -> Path:
    """Uncoordinated baseline plus the shaping sweeps."""
    out_dir = config.output_dir
    users, target = _load_users_and_target(config, out_dir)

    baseline = uncoordinated_baseline(users, config.grid)
    write_schedules_csv(out_dir / "uncoordinated_schedules.csv", baseline.schedules)
    write_profile_csv(out_dir / "uncoordinated_aggregate.csv", baseline.aggregate_kwh)

    with open(out_dir / "events.jsonl", "w") as events:
        shaped = run_shaping(
            users, target, config.policy, grid=config.grid, event_sink=events
        )
    write_schedules_csv(out_dir / "shaped_schedules.csv", shaped.fleet.schedules)
    write_profile_csv(out_dir / "shaped_aggregate.csv", shaped.fleet.aggregate_kwh)
    _write_mse_csv(out_dir / "shaping_mse.csv", "shaping", shaped.mse_trace)
    _record(out_dir, config, [
        "uncoordinated_schedules.csv", "uncoordinated_aggregate.csv",
        "shaped_schedules.csv", "shaped_aggregate.csv", "shaping_mse.csv",
        "events.jsonl",
    ])
    return out_dir


def cmd_alter(config: ScenarioConfig) -> Path:
    """Detect the price event and re-optimize the tail of the day."""
    out_dir = config.output_dir
    users, target = _load_users_and_target(config, out_dir)
    shaped_fleet = fleet_from_artifacts(
        out_dir / "fleet.csv", out_dir / "households.csv",
        _require(out_dir, "shaped_schedules.csv"), config.grid,
    )
    market = _market(config, out_dir)
    t0 = detect_t0(market, config.grid.horizon_slots, config.trigger)

    if t0 is None:
        altered = ShapedOutcome(shaped_fleet, 0, ())
    else:
        with open(out_dir / "events.jsonl", "a") as events:
            altered = run_altering(
                ShapedOutcome(shaped_fleet, 0, ()), t0, config.lam,
                config.policy, target_kwh=target, grid=config.grid,
                event_sink=events,
            )
    write_schedules_csv(out_dir / "altered_schedules.csv", altered.fleet.schedules)
    write_profile_csv(out_dir / "altered_aggregate.csv", altered.fleet.aggregate_kwh)
    _write_mse_csv(out_dir / "altering_mse.csv", "altering", altered.mse_trace)
    (out_dir / "alter_meta.json").write_text(json.dumps(
        {"t0": t0, "lambda": config.lam, "trigger_mode": config.trigger.mode.value},
        indent=2, sort_keys=True,
    ) + "\n")
    _record(out_dir, config, [
        "altered_schedules.csv", "altered_aggregate.csv", "altering_mse.csv",
        "alter_meta.json",
    ])
    return out_dir


def cmd_settle(config: ScenarioConfig) -> CostChainReport:
    """Price the three aggregates against the market day."""
    out_dir = config.output_dir
    grid = config.grid
    market = _market(config, out_dir)
    meta = json.loads(_require(out_dir, "alter_meta.json").read_text())
    aggregates = {
        name: load_profile_csv(_require(out_dir, f"{name}_aggregate.csv"),
                               grid.horizon_slots)
        for name in ("uncoordinated", "shaped", "altered")
    }
    report = CostChainReport(
        uncoordinated=settle(aggregates["uncoordinated"], market),
        shaped=settle(aggregates["shaped"], market),
        altered=settle(aggregates["altered"], market),
        t0=meta["t0"],
    )
    (out_dir / "report.txt").write_text(report.to_text())
    write_table(out_dir / "report_stages.csv",
                ["stage", "da_usd", "rt_usd", "total_usd"], report.rows())
    _record(out_dir, config, ["report.txt", "report_stages.csv"])
    return report


def cmd_run(config: ScenarioConfig) -> CostChainReport:
    """All five stages in order against one output directory."""
    cmd_gen(config)
    cmd_shape(config)
    cmd_alter(config)
    report = cmd_settle(config)
    cmd_report(config)
    return report


def _slot_cost_usd(aggregate: np.ndarray, market: MarketDay) -> np.ndarray:
    imbalance = aggregate - market.da_purchased_kwh
    return (market.da_purchased_kwh * market.da_price_per_mwh
            + imbalance * market.rt_price_per_mwh) / 1000.0


def cmd_report(config: ScenarioConfig) -> Path:
    """Emit plot-ready series and render the figures next to them."""
    from . import plots

    out_dir = config.output_dir
    grid = config.grid
    users, target = _load_users_and_target(config, out_dir)
    market = _market(config, out_dir)
    household = np.sum([u.household_load_kwh for u in users], axis=0)
    aggregates = {
        name: load_profile_csv(_require(out_dir, f"{name}_aggregate.csv"),
                               grid.horizon_slots)
        for name in ("uncoordinated", "shaped", "altered")
    }
    availability = availability_histogram(users, grid)
    mse_rows = []
    for name in ("shaping_mse.csv", "altering_mse.csv"):
        with open(_require(out_dir, name)) as fh:
            mse_rows.extend(line.rstrip("\n").split(",")
                            for line in fh.readlines()[1:])

    write_table(
        out_dir / "series_aggregates.csv",
        ["slot", "household_kwh", "target_kwh", "uncoordinated_kwh",
         "shaped_kwh", "altered_kwh"],
        [
            (t, float(household[t]), float(target[t]),
             float(aggregates["uncoordinated"][t]),
             float(aggregates["shaped"][t]), float(aggregates["altered"][t]))
            for t in range(grid.horizon_slots)
        ],
    )
    write_table(
        out_dir / "series_availability.csv",
        ["slot", "connected_pevs"],
        [(t, int(availability[t])) for t in range(grid.horizon_slots)],
    )
    write_table(out_dir / "series_mse.csv", ["phase", "sweep", "mse_kwh2"],
                [(r[0], int(r[1]), float(r[2])) for r in mse_rows])
    slot_costs = {name: _slot_cost_usd(agg, market)
                  for name, agg in aggregates.items()}
    write_table(
        out_dir / "series_slot_costs.csv",
        ["slot", "da_price_per_mwh", "rt_price_per_mwh", "uncoordinated_usd",
         "shaped_usd", "altered_usd"],
        [
            (t, float(market.da_price_per_mwh[t]),
             float(market.rt_price_per_mwh[t]),
             float(slot_costs["uncoordinated"][t]),
             float(slot_costs["shaped"][t]), float(slot_costs["altered"][t]))
            for t in range(grid.horizon_slots)
        ],
    )

    plots.plot_aggregates(out_dir / "fig_aggregates.png", household, target,
                          aggregates)
    plots.plot_availability(out_dir / "fig_availability.png", availability)
    plots.plot_mse(out_dir / "fig_mse.png", mse_rows)
    plots.plot_slot_costs(out_dir / "fig_slot_costs.png", market, slot_costs)
    _record(out_dir, config, [
        "series_aggregates.csv", "series_availability.csv", "series_mse.csv",
        "series_slot_costs.csv", "fig_aggregates.png", "fig_availability.png",
        "fig_mse.png", "fig_slot_costs.png",
    ])
    return out_dir
