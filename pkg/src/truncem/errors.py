"""Exception types raised by the simulation library."""


class TruncEMError(Exception):
    """Base class for all library errors."""


class ConfigError(TruncEMError, ValueError):
    """Invalid argument or experiment configuration."""


class UnknownProblem(ConfigError, KeyError):
    pass


class InvalidStepSize(ConfigError):
    pass


class InvalidIndex(ConfigError):
    pass


class InvalidData(ConfigError):
    pass


class GridMismatch(ConfigError):
    """Step sizes or path resolutions are not integer multiples of each other."""


class OutOfRange(TruncEMError, ValueError):
    pass


class NumericOverflow(TruncEMError, ArithmeticError):
    """A coefficient or state became non-finite.

    ``step`` is the grid index at which the non-finite value appeared, when known.
    """

    def __init__(self, message, t=None, norm=None, step=None):
        super().__init__(message)
        self.t = t
        self.norm = norm
        self.step = step


class HorizonNotReached(TruncEMError, RuntimeError):
    pass


class EstimatorDegenerate(TruncEMError, RuntimeError):
    """Every Monte Carlo path failed at some step size."""
