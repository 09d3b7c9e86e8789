"""Adaptive latent-space tuning of an encoder-decoder model of a drifting beam."""

from .core import AxisPair, ImageGrid, MachineParams, ProjectionSet, mse
from .es import EsConfig, es_step, run_static, run_tracking
from .tuner import MeasurementChannel, TuningRun, adapt, evaluate_hidden, make_stale_guess

__version__ = "0.1.0"

__all__ = [
    "AxisPair", "ImageGrid", "MachineParams", "ProjectionSet", "mse",
    "EsConfig", "es_step", "run_static", "run_tracking",
    "MeasurementChannel", "TuningRun", "adapt", "evaluate_hidden", "make_stale_guess",
]
