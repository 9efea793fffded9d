"""Exception hierarchy.

Extraction failures carry the offending parameter point so the CLI and the
verification suite can report where a computation broke down.
"""

from __future__ import annotations


class CaffineError(Exception):
    """Base class for all package errors."""


class InvalidInput(CaffineError, ValueError):
    """Parameters or configuration violate a documented constraint."""


class InvalidRatio(InvalidInput):
    pass


class NotQuasiUmbilical(InvalidInput):
    pass


class CaseMismatch(InvalidInput):
    pass


class DeterminantError(InvalidInput):
    pass


class CalibrationError(CaffineError):
    pass


class OrderUnsupported(CaffineError, ValueError):
    pass


class ExtractionError(CaffineError):
    """A pointwise geometric computation failed.

    Parameters
    ----------
    message : str
        Human readable reason.
    point : sequence of float, optional
        Parameter point where the failure was detected.
    """

    def __init__(self, message: str, point=None):
        self.reason = message
        self.point = None if point is None else tuple(float(x) for x in point)
        if self.point is not None:
            message = f"{message} at point {self.point}"
        super().__init__(message)


class DomainError(ExtractionError):
    """Argument outside the domain of an elementary function or a chart."""


class ChartError(DomainError):
    pass


class DegenerateError(ExtractionError):
    pass


class IndefiniteMetricError(ExtractionError):
    pass


class FrameSolveError(ExtractionError):
    pass


class SupportZeroError(ExtractionError):
    pass


class StencilError(ExtractionError):
    pass


class RankError(ExtractionError):
    pass
