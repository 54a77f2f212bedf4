"""Exception hierarchy shared by all stages."""


class TubedError(Exception):
    """Base class; carries an optional structured payload for reports."""

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class DomainError(TubedError, ValueError):
    """Coordinates outside the chart domain of a model."""


class RangeError(TubedError, ValueError):
    """Point outside the injectivity domain of a log map."""


class ResourceError(TubedError, RuntimeError):
    """Requested work exceeds the configured budget."""


class PreconditionError(TubedError, ValueError):
    """Input violates a documented precondition."""


class ConfigurationError(TubedError, ValueError):
    """A stage was assembled from inconsistent parts."""


class NumericError(TubedError, ArithmeticError):
    """A numerical estimate degenerated."""


class CoverageError(TubedError, ValueError):
    """A point lies outside every chart of a cover."""
