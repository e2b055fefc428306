from .checker import Finding, Report, check_consistency, load_traces
from .replica import QrPose, Replica, apply, recompute_placements
from .runner import ConnectionLost, RunResult, ScenarioRunner, run_scenario
from .scenario import (
    ACTIONS,
    Action,
    Actor,
    Scenario,
    generate_scenario,
    load_scenario,
    scenario_from_json,
    scenario_to_json,
)

__all__ = [
    "ACTIONS",
    "Action",
    "Actor",
    "ConnectionLost",
    "Finding",
    "QrPose",
    "Replica",
    "Report",
    "RunResult",
    "Scenario",
    "ScenarioRunner",
    "apply",
    "check_consistency",
    "generate_scenario",
    "load_scenario",
    "load_traces",
    "recompute_placements",
    "run_scenario",
    "scenario_from_json",
    "scenario_to_json",
]
