"""Receding-horizon MPC on a general optimal control solver, with a conditional-integral
reference shaper, a Luenberger observer, a surrogate two-by-two plant and a PID baseline."""

from .errors import (ConfigError, DegenerateReferenceError, DimensionError, DivergenceError,
                     RankDeficiencyError, RhmpcError)
from .grid import ControlGrid
from .model import StateSpaceModel, Trajectory, discretize_zoh, integrate_rk4, predict

__all__ = [
    "ConfigError",
    "ControlGrid",
    "DegenerateReferenceError",
    "DimensionError",
    "DivergenceError",
    "RankDeficiencyError",
    "RhmpcError",
    "StateSpaceModel",
    "Trajectory",
    "discretize_zoh",
    "integrate_rk4",
    "predict",
]

__version__ = "0.1.0"
