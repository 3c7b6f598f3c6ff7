"""Prints one PASS/FAIL line per acceptance check after the run."""

from __future__ import annotations

_ACCEPTANCE = {
    "test_solver_matches_exhaustive_oracle_on_random_instances":
        "1. schedule solver matches the exhaustive oracle on 200 random instances",
    "test_blend_weight_limits_restriction_and_full_discharge":
        "2. blend-weight limits: lam=1 restricts, lam=0 sells at full power",
    "test_fixture_sweep_two_settles":
        "3. bundled fixture settles after one sweep (sweep-2 MSE <= 1e-4)",
    "test_event_response_cuts_hour_nine_aggregate":
        "4. event response: t0 at slot 9, hour-9 aggregate cut below 80%",
    "test_cost_chain_improves_at_least_five_percent_per_stage":
        "5. cost chain improves >= 5% at each stage",
    "test_energy_conservation_soc_bounds_and_frozen_prefixes":
        "6. energy conserved, SOC in bounds, prefixes frozen bit-exactly",
    "test_settlement_matches_hand_computed_cases":
        "7. settlement reproduces hand-computed cases exactly",
    "test_same_seed_gives_identical_bytes_and_fleets":
        "8. same seed, same bytes: pipeline and fleet sampling determinism",
}

_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1].split("[")[0]
    if name not in _ACCEPTANCE:
        return
    if report.when == "call":
        _outcomes[name] = report.outcome
    elif report.outcome != "passed":  # setup error or skip
        _outcomes.setdefault(name, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, label in _ACCEPTANCE.items():
        outcome = _outcomes.get(name)
        if outcome is None:
            continue
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(
            outcome, outcome.upper()
        )
        terminalreporter.write_line(f"{word}  {label}")
