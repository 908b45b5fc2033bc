"""Time-fractional SPDE toolkit: Mittag-Leffler functions, fundamental-solution
kernels, Littlewood-Paley estimates, Levy and Wiener noise, and truncated
Picard mild solutions."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .bernstein import LogPower, Mixture, Power
from .errors import (
    AliasingWarning,
    ConfigError,
    DomainError,
    FracSPDEError,
    GateViolation,
    NonconvergenceError,
    ParameterError,
)
from .kernels import Field, FractionalExponents, SpectralGrid, kernel_grid
from .mittag_leffler import MLParams, ml, ml_table
from .solver import NonlinearitySpec, SolverConfig, solve

__all__ = [
    "BACKEND",
    "AliasingWarning",
    "ConfigError",
    "DomainError",
    "Field",
    "FracSPDEError",
    "FractionalExponents",
    "GateViolation",
    "LogPower",
    "MLParams",
    "Mixture",
    "NonconvergenceError",
    "NonlinearitySpec",
    "ParameterError",
    "Power",
    "SolverConfig",
    "SpectralGrid",
    "kernel_grid",
    "ml",
    "ml_table",
    "solve",
]
