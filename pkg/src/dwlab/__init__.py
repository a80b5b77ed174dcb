"""Numerical laboratory for the damped wave equation: spectra, pressure and energy decay."""

__version__ = "0.1.0"

from .errors import DwlabError, InvalidInputError, NumericalError, ReductionError, SingularError

__all__ = [
    "__version__",
    "DwlabError",
    "InvalidInputError",
    "NumericalError",
    "ReductionError",
    "SingularError",
]
