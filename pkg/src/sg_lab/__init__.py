"""Stochastic gradient identification with non-persistent excitation: simulation and bounds."""

from .errors import (
    AnchorError,
    ConfigError,
    ContractionViolation,
    DataError,
    DegenerateWeights,
    DimensionError,
    DomainError,
    InsufficientData,
    InsufficientHorizon,
    InvalidMatrix,
    SGLabError,
    SingularMatrix,
)
from .estimator import EstimatorState, run_regression, sg_update
from .experiment import ExperimentConfig, RunSummary, compare_regimes, emit_plots, load_config, parse_config, run_experiment
from .model import ArmaxSystem, NoiseModel, SimulationTrace, check_spr, simulate_step
from .schedule import BlockSchedule, factorial_schedule
from .transition import TransitionTracker, product_oracle

__version__ = "0.1.0"

__all__ = [
    "AnchorError", "ArmaxSystem", "BlockSchedule", "ConfigError", "ContractionViolation", "DataError",
    "DegenerateWeights", "DimensionError", "DomainError", "EstimatorState", "ExperimentConfig",
    "InsufficientData", "InsufficientHorizon", "InvalidMatrix", "NoiseModel", "RunSummary", "SGLabError",
    "SimulationTrace", "SingularMatrix", "TransitionTracker", "check_spr", "compare_regimes", "emit_plots",
    "factorial_schedule", "load_config", "parse_config", "product_oracle", "run_experiment", "run_regression",
    "sg_update", "simulate_step",
]
