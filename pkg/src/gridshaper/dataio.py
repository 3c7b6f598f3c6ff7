"""Strict CSV ingestion and byte-stable artifact writers.

Readers reject anything surprising by design: headers must match exactly,
every slot must appear exactly once, and numbers must parse.  A price file
that silently dropped hour 13 once cost an afternoon; never again.

Writers emit floats with repr(), the shortest digits that round-trip to the
identical bit pattern, and a fixed "\\n" terminator, so re-running a
pipeline with the same seed produces byte-identical files on any platform.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import FleetState, PevSpec, ScheduleVector, TimeGrid, UserProfile
from .scenario import TabulatedDistribution


class DataFormatError(ValueError):
    """A file failed strict validation; the message says where and why."""


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    if rows[0] != expected_header:
        raise DataFormatError(
            f"{path}: expected header {','.join(expected_header)!r}, "
            f"got {','.join(rows[0])!r}"
        )
    return rows[1:]


def _parse_indexed_column(path: Path, rows: list[list[str]], index_name: str,
                          expected_length: int | None) -> np.ndarray:
    seen: dict[int, float] = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise DataFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            idx = int(row[0])
        except ValueError:
            raise DataFormatError(
                f"{path}:{lineno}: non-integer {index_name} {row[0]!r}"
            ) from None
        try:
            value = float(row[1])
        except ValueError:
            raise DataFormatError(
                f"{path}:{lineno}: non-numeric value {row[1]!r}"
            ) from None
        if idx in seen:
            raise DataFormatError(f"{path}: duplicate {index_name} {idx}")
        seen[idx] = value
    length = expected_length if expected_length is not None else len(seen)
    missing = sorted(set(range(length)) - set(seen))
    if missing:
        raise DataFormatError(f"{path}: missing {index_name} {missing[0]}")
    extra = sorted(set(seen) - set(range(length)))
    if extra:
        raise DataFormatError(
            f"{path}: {index_name} {extra[0]} outside 0..{length - 1}"
        )
    return np.array([seen[i] for i in range(length)])


def load_prices_csv(path: str | Path, expected_length: int | None = None) -> np.ndarray:
    """Read an hour,price_usd_per_mwh file covering every hour exactly once."""
    path = Path(path)
    rows = _read_rows(path, ["hour", "price_usd_per_mwh"])
    return _parse_indexed_column(path, rows, "hour", expected_length)


def load_profile_csv(path: str | Path, expected_length: int | None = None) -> np.ndarray:
    """Read a slot,kwh profile covering every slot exactly once."""
    path = Path(path)
    rows = _read_rows(path, ["slot", "kwh"])
    return _parse_indexed_column(path, rows, "slot", expected_length)


def load_distribution_csv(path: str | Path) -> TabulatedDistribution:
    """Read a value,probability table into a TabulatedDistribution."""
    path = Path(path)
    rows = _read_rows(path, ["value", "probability"])
    pairs = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 2:
            raise DataFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            pairs.append((int(row[0]), float(row[1])))
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: bad row {row!r}") from None
    if not pairs:
        raise DataFormatError(f"{path}: no rows")
    try:
        return TabulatedDistribution.from_pairs(pairs)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _fmt(value: float) -> str:
    return repr(float(value))


def write_table(path: str | Path, header: Sequence[str],
                rows: Iterable[Sequence[object]]) -> None:
    """Write a CSV with repr-formatted floats and a fixed line terminator."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([
                _fmt(cell) if isinstance(cell, float) else cell for cell in row
            ])


def write_profile_csv(path: str | Path, values: np.ndarray) -> None:
    write_table(path, ["slot", "kwh"], [(t, float(v)) for t, v in enumerate(values)])


def mask_to_text(mask: np.ndarray) -> str:
    return "".join("1" if bit else "0" for bit in mask)


def text_to_mask(text: str) -> np.ndarray:
    if set(text) - {"0", "1"}:
        raise DataFormatError(f"mask must be 0/1 characters, got {text!r}")
    return np.array([ch == "1" for ch in text], dtype=bool)


_FLEET_HEADER = [
    "user_id", "permissible_slots", "required_energy_kwh", "max_power_kw",
    "capacity_kwh", "soc_arrival_kwh", "v2g_enabled", "min_soc_fraction",
]


def write_fleet_csv(path: str | Path, users: Sequence[UserProfile]) -> None:
    rows = []
    for u in users:
        pev = u.pev
        rows.append([
            pev.user_id,
            mask_to_text(pev.permissible_slots),
            float(pev.required_energy_kwh),
            float(pev.max_power_kw),
            float(pev.capacity_kwh),
            float(pev.soc_arrival_kwh),
            int(pev.v2g_enabled),
            float(pev.min_soc_fraction),
        ])
    write_table(path, _FLEET_HEADER, rows)


def write_households_csv(path: str | Path, users: Sequence[UserProfile]) -> None:
    rows = []
    for u in users:
        for t, v in enumerate(u.household_load_kwh):
            rows.append([u.user_id, t, float(v)])
    write_table(path, ["user_id", "slot", "kwh"], rows)


def load_fleet_csv(fleet_path: str | Path, households_path: str | Path,
                   grid: TimeGrid) -> list[UserProfile]:
    fleet_path = Path(fleet_path)
    rows = _read_rows(fleet_path, _FLEET_HEADER)
    households = _load_long_by_user(Path(households_path), grid)
    users = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(_FLEET_HEADER):
            raise DataFormatError(
                f"{fleet_path}:{lineno}: expected {len(_FLEET_HEADER)} fields"
            )
        user_id = row[0]
        try:
            pev = PevSpec(
                user_id=user_id,
                permissible_slots=text_to_mask(row[1]),
                required_energy_kwh=float(row[2]),
                max_power_kw=float(row[3]),
                capacity_kwh=float(row[4]),
                soc_arrival_kwh=float(row[5]),
                v2g_enabled=bool(int(row[6])),
                min_soc_fraction=float(row[7]),
            )
        except ValueError as exc:
            raise DataFormatError(f"{fleet_path}:{lineno}: {exc}") from exc
        if user_id not in households:
            raise DataFormatError(f"{households_path}: no household rows for {user_id!r}")
        users.append(UserProfile(pev, households.pop(user_id)))
    if households:
        orphan = sorted(households)[0]
        raise DataFormatError(f"{households_path}: household rows for unknown user {orphan!r}")
    return users


def _load_long_by_user(path: Path, grid: TimeGrid) -> dict[str, np.ndarray]:
    rows = _read_rows(path, ["user_id", "slot", "kwh"])
    per_user: dict[str, dict[int, float]] = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 3:
            raise DataFormatError(f"{path}:{lineno}: expected 3 fields")
        try:
            slot, value = int(row[1]), float(row[2])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: bad row {row!r}") from None
        slots = per_user.setdefault(row[0], {})
        if slot in slots:
            raise DataFormatError(f"{path}: duplicate slot {slot} for user {row[0]!r}")
        slots[slot] = value
    out = {}
    for user_id, slots in per_user.items():
        missing = sorted(set(range(grid.horizon_slots)) - set(slots))
        if missing:
            raise DataFormatError(
                f"{path}: user {user_id!r} missing slot {missing[0]}"
            )
        out[user_id] = np.array([slots[t] for t in range(grid.horizon_slots)])
    return out


def write_schedules_csv(path: str | Path,
                        schedules: Mapping[str, ScheduleVector]) -> None:
    rows = []
    for user_id in sorted(schedules):
        for t, v in enumerate(schedules[user_id].values):
            rows.append([user_id, t, float(v)])
    write_table(path, ["user_id", "slot", "kwh"], rows)


def load_schedules_csv(path: str | Path, grid: TimeGrid) -> dict[str, ScheduleVector]:
    by_user = _load_long_by_user(Path(path), grid)
    return {uid: ScheduleVector(vec) for uid, vec in by_user.items()}


def fleet_from_artifacts(fleet_path: str | Path, households_path: str | Path,
                         schedules_path: str | Path, grid: TimeGrid) -> FleetState:
    users = load_fleet_csv(fleet_path, households_path, grid)
    schedules = load_schedules_csv(schedules_path, grid)
    return FleetState.build(users, schedules, grid)
