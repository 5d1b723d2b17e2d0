"""Differentially private frequency and heavy-hitter sketches over sliding windows."""

from .bench import Workload, build_workload, mae, measure_throughput, mre, prf1, run_experiment
from .checkpoints import CheckpointList, alpha_for_count, build_checkpoints, checkpoint_count
from .datagen import StreamSpec, generate, read_stream, write_stream
from .oracle import ExactWindow
from .params import (
    BudgetSchedule,
    FrameworkConfig,
    PrivacyBudget,
    budget_schedule,
    default_delta,
    epsilon_from_rho,
    rho_from_eps_delta,
)
from .pcms import PCMS, FrozenSketchError
from .window import SketchSelection, WindowSketch

__version__ = "0.1.0"

__all__ = [
    "PCMS", "BudgetSchedule", "CheckpointList", "ExactWindow", "FrameworkConfig",
    "FrozenSketchError", "PrivacyBudget", "SketchSelection", "StreamSpec", "WindowSketch",
    "Workload", "alpha_for_count", "budget_schedule", "build_checkpoints", "build_workload",
    "checkpoint_count", "default_delta", "epsilon_from_rho", "generate", "mae",
    "measure_throughput", "mre", "prf1", "read_stream", "rho_from_eps_delta",
    "run_experiment", "write_stream",
]
