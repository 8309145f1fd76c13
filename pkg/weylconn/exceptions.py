"""Custom common exceptions."""


class WeylConnError(Exception):
    """Base class of every error raised by weylconn."""

    def __init__(self, message):
        """Initialize the error with a specific error message."""
        self.message = message
        super().__init__(self.message)


class InputError(WeylConnError):
    """Base class of the errors caused by malformed user input."""


class NumericalError(WeylConnError):
    """Base class of the errors raised while evaluating or integrating."""


class ExpressionSyntaxError(InputError):
    """Exception raised when an expression does not follow the grammar."""

    def __init__(self, message, position):
        """Initialize ExpressionSyntaxError with a message and a 0-based position."""
        self.position = position
        super().__init__(f"{message} (at position {position})")


class UnknownIdentifierError(InputError):
    """Exception raised when an expression uses an undeclared name."""

    def __init__(self, name, position):
        """Initialize UnknownIdentifierError naming the offending identifier."""
        self.name = name
        self.position = position
        super().__init__(f"Unknown identifier '{name}' (at position {position})")


class UnboundParameterError(InputError):
    """Exception raised when a parameter referenced by an expression has no value."""


class DimensionMismatchError(InputError):
    """Exception raised when a point, vector or matrix has the wrong dimension."""


class InvalidParameterError(InputError):
    """Exception raised when a builder receives an inadmissible parameter."""


class InvalidScenarioError(InputError):
    """Exception raised when a scenario fails one of its preflight checks."""


class ScenarioFileError(InputError):
    """Exception raised when a scenario file cannot be read or validated."""


class ClassificationUnavailableError(InputError):
    """Exception raised when exactness is requested for a scenario without Ψ."""


class DomainError(NumericalError):
    """Exception raised when an expression is evaluated outside of its domain."""


class SingularMetricError(NumericalError):
    """Exception raised when a metric is not invertible at a point."""


class SignatureMismatchError(NumericalError):
    """Exception raised when a metric does not have its declared signature."""


class DegenerateDeckMapError(NumericalError):
    """Exception raised when the linear part of a deck map is not invertible."""


class ClosednessError(NumericalError):
    """Exception raised when a 1-form assumed closed has a large exterior derivative."""


class QuadratureError(NumericalError):
    """Exception raised when a line integral misses its error target."""


class ConvergenceError(NumericalError):
    """Exception raised when an RK4 result fails the step-halving gate."""


class GeodesicBlowUpError(NumericalError):
    """Exception raised when a geodesic leaves every bounded region."""

    def __init__(self, message, trajectory):
        """Initialize GeodesicBlowUpError keeping the partial trajectory."""
        self.trajectory = trajectory
        super().__init__(message)
