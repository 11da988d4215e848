"""Hierarchical-absolute reciprocity calibration for hybrid-beamforming MIMO links.

The package simulates TDD training over a fully-connected hybrid-beamforming
link, estimates the transmit/receive RF mismatch of both the digital and the
analog chains, compares against conventional relative calibration, and
evaluates the Cramer-Rao bounds and the achievable rate.
"""

__version__ = "0.1.0"

from .errors import (
    DimensionError,
    HacalError,
    PilotLengthError,
    RankDeficiencyError,
    SolverError,
    ValidationError,
)

__all__ = [
    "__version__",
    "DimensionError",
    "HacalError",
    "PilotLengthError",
    "RankDeficiencyError",
    "SolverError",
    "ValidationError",
]
