"""Figure rendering for the report command.

Headless by construction (Agg backend, selected before pyplot import) and
kept free of embedded metadata so rendered files do not churn between
identical runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .core import MarketDay  # noqa: E402

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}

_STAGE_STYLE = {
    "uncoordinated": {"color": "#b15928", "linestyle": ":"},
    "shaped": {"color": "#1f78b4", "linestyle": "-"},
    "altered": {"color": "#33a02c", "linestyle": "--"},
}


def plot_aggregates(path: Path, household: np.ndarray, target: np.ndarray,
                    aggregates: dict[str, np.ndarray]) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    slots = np.arange(len(household))
    ax.plot(slots, household, color="#999999", label="household only")
    ax.plot(slots, target, color="#000000", linewidth=2, label="purchased target")
    for name, agg in aggregates.items():
        ax.plot(slots, agg, label=name, **_STAGE_STYLE[name])
    ax.set_xlabel("slot")
    ax.set_ylabel("kWh")
    ax.set_title("Fleet aggregate per stage")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_availability(path: Path, availability: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(np.arange(len(availability)), availability, color="#1f78b4")
    ax.set_xlabel("slot")
    ax.set_ylabel("connected PEVs")
    ax.set_title("PEV availability")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_mse(path: Path, mse_rows: list[list[str]]) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for phase in ("shaping", "altering"):
        points = [(int(r[1]), float(r[2])) for r in mse_rows if r[0] == phase]
        if points:
            sweeps, values = zip(*points)
            ax.semilogy(sweeps, np.maximum(values, 1e-16), marker="o", label=phase)
    ax.set_xlabel("sweep")
    ax.set_ylabel("aggregate MSE (kWh$^2$)")
    ax.set_title("Convergence")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_slot_costs(path: Path, market: MarketDay,
                    slot_costs: dict[str, np.ndarray]) -> None:
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(8, 5.5), sharex=True,
        gridspec_kw={"height_ratios": [1, 2]},
    )
    slots = np.arange(len(market.da_price_per_mwh))
    top.plot(slots, market.da_price_per_mwh, color="#000000", label="DA price")
    top.plot(slots, market.rt_price_per_mwh, color="#e31a1c", label="RT price")
    top.set_ylabel("$/MWh")
    top.legend(fontsize=8)
    for name, cost in slot_costs.items():
        bottom.plot(slots, cost, label=name, **_STAGE_STYLE[name])
    bottom.set_xlabel("slot")
    bottom.set_ylabel("cost (USD)")
    bottom.legend(fontsize=8)
    fig.suptitle("Prices and per-slot settlement cost")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
