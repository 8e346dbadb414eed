"""Exception hierarchy.

Validation problems (bad input, parse failures) and numerical problems
(singular matrices, integrator failures, leaving the chart) are kept in
separate branches so the CLI can map them to distinct exit codes.
"""


class PathliftError(Exception):
    """Base class for all library errors."""


class ValidationError(PathliftError, ValueError):
    """Input is structurally invalid: wrong shapes, ranks, dimensions."""


class ExpressionError(ValidationError):
    """Expression text could not be parsed or references unknown names."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class SceneError(ValidationError):
    """Scene file is malformed or inconsistent."""


class NumericalError(PathliftError, ArithmeticError):
    """A computation could not be carried out reliably."""


class SingularMatrixError(NumericalError):
    """Matrix is singular or its condition number exceeds the allowed cap."""


class ChartBoundsError(NumericalError):
    """A point lies outside the open coordinate box of its chart."""


class IntegrationError(NumericalError):
    """The ODE integrator met non-finite data or an unusable step."""


class EvaluationDomainError(NumericalError):
    """Expression evaluated outside its domain (log of nonpositive, 1/0, ...)."""
