"""Linearization of mechanical control systems by mechanical feedback and configuration changes."""

from .checker import ConditionVerdict, MFReport, SamplingPlan, check_all
from .geometry import (
    MechanicalSystem,
    VectorField,
    ad_sequence,
    apply_feedback,
    change_coordinates,
    covariant_derivative,
    lie_bracket,
    linear_change,
    second_covariant_derivative,
)
from .io import load_system, read_artifact, write_artifact
from .simulator import correspondence, correspondence_error, integrate
from .synthesis import find_output, linearize, verify_linearization, verify_output

__version__ = "0.1.0"

__all__ = [
    "ConditionVerdict", "MFReport", "MechanicalSystem", "SamplingPlan", "VectorField", "ad_sequence",
    "apply_feedback", "change_coordinates", "check_all", "correspondence", "correspondence_error",
    "covariant_derivative", "find_output", "integrate", "lie_bracket", "linear_change", "linearize",
    "load_system", "read_artifact", "second_covariant_derivative", "verify_linearization", "verify_output",
    "write_artifact",
]
