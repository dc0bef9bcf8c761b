"""cavlab: a numerical laboratory for averages over dilated plane curves.

Single-scale averages along a dilated curve, the exponent-region geometry
that governs their Lebesgue mapping properties, extremizer families with
log-log scaling fits, oscillatory-integral diagnostics, and a CLI.
"""

from . import errors
from . import regions
from . import grids
from . import averaging
from . import oscillatory
from . import sharpness
from . import cli
from .curves import (
    Curve,
    RescaledCurve,
    ConditionReport,
    BracketReport,
    SeriesResult,
    power,
    power_log,
    polynomial,
    power_sum,
    named,
    flat_exp,
    parse_curve,
    omega,
    omega_estimate,
    check_conditions,
    rescale,
    verify_rescaled_bounds,
    dyadic_scaling_series,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "regions",
    "grids",
    "averaging",
    "oscillatory",
    "sharpness",
    "cli",
    "Curve",
    "RescaledCurve",
    "ConditionReport",
    "BracketReport",
    "SeriesResult",
    "power",
    "power_log",
    "polynomial",
    "power_sum",
    "named",
    "flat_exp",
    "parse_curve",
    "omega",
    "omega_estimate",
    "check_conditions",
    "rescale",
    "verify_rescaled_bounds",
    "dyadic_scaling_series",
    "__version__",
]
