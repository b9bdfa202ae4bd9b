"""Exception types shared across the package."""


class OcpadError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(OcpadError):
    """A configuration object is structurally invalid."""


class InputError(OcpadError):
    """Runtime input violates an operation's preconditions."""


class TrainingError(OcpadError):
    """Training failed (non-finite loss/gradient, degenerate fold, ...)."""


class FitError(OcpadError):
    """Density-model fitting failed or was given degenerate data."""


class MetricError(OcpadError):
    """A metric cannot be computed from the given scored set."""


class SplitError(OcpadError):
    """A protocol split cannot be built from the given samples."""


class ParseError(OcpadError):
    """A dataset file is malformed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(OcpadError):
    """A checkpoint or model file could not be written or read back."""
