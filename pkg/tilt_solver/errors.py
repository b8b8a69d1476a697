"""Exceptions raised by the TILT solver."""
from typing import Any, Optional


class TiltError(Exception):
    """Base class for all solver failures."""

    def __init__(self, message: str, result: Optional[Any] = None):
        super().__init__(message)
        # Partial TiltResult, attached by the outer loop when available
        self.result = result


class NonFiniteInputError(TiltError, ValueError):
    """A matrix handed to the solver contains NaN or Inf entries."""


class SingularJacobianError(TiltError):
    """The Jacobian (or its constrained Gram matrix) is rank deficient."""


class WindowEscapeError(TiltError):
    """The warped window leaves the image."""


class DegenerateWindowError(TiltError):
    """The sampled patch has zero energy and cannot be normalized."""


class DegenerateProblemError(TiltError):
    """The projected data term vanishes, so the stopping criteria are undefined."""


class DivergenceError(TiltError):
    """An inner solver produced non-finite iterates or an exploding objective."""

    def __init__(self, message: str, report: Optional[Any] = None, result: Optional[Any] = None):
        super().__init__(message, result=result)
        self.report = report
