"""Massive MIMO downlink under channel aging and phase noise: deterministic
equivalents and a Monte-Carlo reference."""

from .channel_model import LargeScaleProfile, SystemConfig, draw_large_scale
from .detequiv import de_rate, de_sinr_mrt, de_sinr_rzf, solve_derivative, solve_fixed_point
from .errors import (
    ChanagingError,
    ConfigError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    NumericError,
)
from .precoding_mc import ergodic_rate, mc_rate, mc_sinr, multicell_mc_sumrate
from .specfun import bessel_j0

__all__ = [
    "SystemConfig",
    "LargeScaleProfile",
    "draw_large_scale",
    "bessel_j0",
    "solve_fixed_point",
    "solve_derivative",
    "de_sinr_mrt",
    "de_sinr_rzf",
    "de_rate",
    "mc_sinr",
    "mc_rate",
    "ergodic_rate",
    "multicell_mc_sumrate",
    "ChanagingError",
    "ConfigError",
    "DomainError",
    "NumericError",
    "ConvergenceError",
    "DegenerateError",
]

__version__ = "0.1.0"
