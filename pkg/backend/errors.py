# backend/errors.py

"""
Exception hierarchy shared by the services, the CLI and the HTTP routes.
`exit_code` is the process status the CLI returns for an uncaught error.
"""


class PermBoundError(Exception):
    """Base error for this package."""
    exit_code = 2


class ParameterError(PermBoundError, ValueError):
    """Inputs violate an operation's preconditions."""


class SizeError(ParameterError):
    """Matrix dimension above an engine cap."""


class FieldError(ParameterError):
    """Real-only operation called with a complex matrix."""


class DimensionError(ParameterError):
    """Vector and matrix dimensions do not match."""


class MatrixParseError(PermBoundError, ValueError):
    """Malformed matrix file or payload."""


class StructuralError(PermBoundError):
    """Large entries of a matrix share a row or column."""
    exit_code = 1


class ConsistencyError(PermBoundError):
    """Two exact engines disagree beyond tolerance."""
    exit_code = 1


class NonConvergenceError(PermBoundError):
    exit_code = 1

    def __init__(self, best_estimate, residual, iterations):
        self.best_estimate = best_estimate
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(best estimate {best_estimate!r}, residual {residual:.3e})"
        )
