"""Exception hierarchy shared by every dwlab module."""


class DwlabError(Exception):
    """Base class for all errors raised by dwlab."""


class InvalidInputError(DwlabError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(DwlabError, RuntimeError):
    """A numerical stage failed (non-convergence, breakdown, ...)."""


class SingularError(NumericalError):
    """A matrix that had to be inverted is singular to working precision."""


class ReductionError(NumericalError):
    """Fundamental-domain reduction did not terminate within its cap."""
