"""Exception types shared across the toolkit.

Every error raised on purpose by this package derives from RfCancelError,
so callers (and the CLI) can map failure classes to exit codes without
string matching.
"""


class RfCancelError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RfCancelError):
    """Invalid static configuration (specs, scenario files, parameters)."""


class InputError(RfCancelError):
    """Runtime input that violates an operation's preconditions."""


class DegeneracyError(RfCancelError):
    """Basis covariance is rank deficient beyond regularization."""


class EstimationError(RfCancelError):
    """An estimator was given data it cannot work with (e.g. all zeros)."""


class SingularityError(RfCancelError):
    """A frequency response is evaluated where a denominator vanishes."""


class NumericError(RfCancelError):
    """Non-finite values encountered where finite ones are required."""


class DivergenceError(RfCancelError):
    """Closed-loop learning diverged.

    Carries the step size that was used and the estimated stability bound
    so the caller can report how far outside the stable region it was.
    """

    def __init__(self, message: str, step_size: float, bound: float):
        super().__init__(message)
        self.step_size = step_size
        self.bound = bound
