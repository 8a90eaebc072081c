"""Exception types shared across the package."""


class CoordinferError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(CoordinferError, ValueError):
    """Array shapes are inconsistent with the declared problem size."""


class ConfigurationError(CoordinferError, ValueError):
    """A configuration value is out of its admissible range."""


class DegenerateDesignError(CoordinferError, ValueError):
    """The design matrix lacks the structure an operation requires
    (e.g. a zero column where a nonzero one is needed)."""


class SupportInvalidError(CoordinferError, ValueError):
    """A coefficient support indexes a rank-deficient design submatrix."""


class SamplerStuckError(CoordinferError, RuntimeError):
    """The model-space sampler hit its consecutive-invalid-proposal limit."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SampleSizeError(CoordinferError, ValueError):
    """Too few draws for a distributional summary to be meaningful."""


class EmptyInputError(CoordinferError, ValueError):
    """An aggregation step found no input records."""


class FirstStageError(CoordinferError, RuntimeError):
    """The first-stage penalized solve did not converge.

    Carries the partial solver result so callers can inspect it.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
