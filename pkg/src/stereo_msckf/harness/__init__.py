"""Experiment harness: configuration, runs, metrics and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config
from .metrics import AlignmentTransform, RunReport, align_yaw_position, compute_metrics, nees
from .runner import MonteCarloReport, monte_carlo, run_recorded, run_scenario, run_simulated

__all__ = [
    "AlignmentTransform", "ConfigError", "ExperimentConfig", "MonteCarloReport", "RunReport",
    "align_yaw_position", "compute_metrics", "load_config", "monte_carlo", "nees",
    "run_recorded", "run_scenario", "run_simulated",
]
