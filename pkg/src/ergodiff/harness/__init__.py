"""Experiment driver, configuration and command line."""

from .config import ExperimentConfig
from .experiments import (
    ExperimentResult,
    run_decomposition_experiment,
    run_localtime_check,
    run_risk_experiment,
    run_tail_experiment,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "run_decomposition_experiment",
    "run_localtime_check",
    "run_risk_experiment",
    "run_tail_experiment",
]
