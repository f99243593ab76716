"""Escalator condition monitoring: energy and vibration features, lifetime health index, RUL."""

from .health import DEFAULT_MODEL, LhiModel, compute_lhi, fit_reference_model
from .rul import RulResult, estimated_age, remaining_useful_life, shifted_curve

__all__ = [
    "DEFAULT_MODEL",
    "LhiModel",
    "RulResult",
    "compute_lhi",
    "estimated_age",
    "fit_reference_model",
    "remaining_useful_life",
    "shifted_curve",
]
__version__ = "0.1.0"
