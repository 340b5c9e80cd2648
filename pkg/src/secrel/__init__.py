"""Robust energy-efficient secure UAV relaying.

The public entry points are re-exported here; see the submodules for the
building blocks.
"""

from .pipeline import AlgorithmTrace, circular_baseline, init_solution, run_algorithm1, tiny_oracle
from .report import dump_config, export_results, load_config, load_solution, run_cli
from .scenario import (
    AdversaryRegion,
    PowerSchedule,
    ScenarioConfig,
    ScenarioError,
    ToleranceSet,
    Trajectory,
    check_solution,
    default_config,
    evaluate_solution,
    icc_check,
)

__all__ = [
    "AdversaryRegion", "AlgorithmTrace", "PowerSchedule", "ScenarioConfig", "ScenarioError",
    "ToleranceSet", "Trajectory", "check_solution", "circular_baseline", "default_config",
    "dump_config", "evaluate_solution", "export_results", "icc_check", "init_solution",
    "load_config", "load_solution", "run_algorithm1", "run_cli", "tiny_oracle",
]
