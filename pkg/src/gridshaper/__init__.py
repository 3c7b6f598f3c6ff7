"""gridshaper: PEV fleet demand shaping and altering under two-settlement pricing.

The usual entry points:

* :func:`sample_fleet` / :func:`make_target` build a reproducible scenario;
* :func:`run_shaping` coordinates the fleet onto a purchase profile and
  :func:`run_altering` re-optimizes the tail of the day after a price event;
* :func:`solve_p1` / :func:`solve_p2` are the per-user exact solves behind
  both phases;
* :func:`settle` and :func:`cost_chain` price aggregates against the market;
* the ``gridshaper`` CLI wraps all of it into a run-directory pipeline.
"""

from .coordinator import (
    AlterTriggerRule,
    ConvergencePolicy,
    ShapedOutcome,
    StopMode,
    TriggerMode,
    detect_t0,
    others_aggregate,
    run_altering,
    run_shaping,
)
from .core import (
    DimensionMismatchError,
    FeasibilityReport,
    FleetState,
    InfeasibleInstanceError,
    MarketDay,
    MissingScheduleError,
    PevSpec,
    ScheduleVector,
    TimeGrid,
    UserProfile,
    aggregate,
    check_feasibility,
    greedy_fill,
    mse,
    validate_pev,
)
from .scenario import (
    DistributionError,
    FleetConfig,
    TabulatedDistribution,
    TargetMode,
    availability_histogram,
    connection_mask,
    make_target,
    sample_fleet,
    valley_fill_level,
)
from .settlement import (
    CostChainReport,
    Scenario,
    Settlement,
    cost_chain,
    settle,
    uncoordinated_baseline,
)
from .userlp import (
    AlteringInstance,
    ShapingInstance,
    brute_force_schedule,
    p1_objective,
    p2_objective,
    solve_p1,
    solve_p2,
)

__version__ = "0.1.0"

__all__ = [
    "AlterTriggerRule",
    "AlteringInstance",
    "ConvergencePolicy",
    "CostChainReport",
    "DimensionMismatchError",
    "DistributionError",
    "FeasibilityReport",
    "FleetConfig",
    "FleetState",
    "InfeasibleInstanceError",
    "MarketDay",
    "MissingScheduleError",
    "PevSpec",
    "Scenario",
    "ScheduleVector",
    "Settlement",
    "ShapedOutcome",
    "ShapingInstance",
    "StopMode",
    "TabulatedDistribution",
    "TargetMode",
    "TimeGrid",
    "TriggerMode",
    "UserProfile",
    "aggregate",
    "availability_histogram",
    "brute_force_schedule",
    "check_feasibility",
    "connection_mask",
    "cost_chain",
    "detect_t0",
    "greedy_fill",
    "make_target",
    "mse",
    "others_aggregate",
    "p1_objective",
    "p2_objective",
    "run_altering",
    "run_shaping",
    "sample_fleet",
    "settle",
    "solve_p1",
    "solve_p2",
    "uncoordinated_baseline",
    "validate_pev",
    "valley_fill_level",
]
