"""Exception types shared across the package."""


class BivarseqError(Exception):
    """Base class for all package-specific errors."""


class InfeasibleCorrelationError(BivarseqError, ValueError):
    """Raised when (theta_x, theta_y, rho) violates a cell-probability restriction.

    The ``restriction`` attribute names the inequality that failed.
    """

    def __init__(self, message: str, restriction: str):
        super().__init__(message)
        self.restriction = restriction


class DegenerateCovarianceError(BivarseqError, ValueError):
    """Raised for covariance matrices that are not positive definite."""


class StreamExhaustedError(BivarseqError, RuntimeError):
    """Raised when an event stream ends before the test can decide."""

    def __init__(self, consumed: int):
        super().__init__(
            f"event stream exhausted after {consumed} events, before a decision"
        )
        self.consumed = consumed


class SequencingError(BivarseqError, ValueError):
    """Raised for out-of-order or duplicate event sequence numbers."""


class MonitorStateError(BivarseqError, ValueError):
    """Raised for invalid monitor states: closed-state events, corrupt or
    mismatched state documents."""
