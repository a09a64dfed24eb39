"""Exception types shared across the solver."""


class AstorError(Exception):
    """Base class for all solver errors."""


class DivergenceError(AstorError):
    """An integration or quadrature produced non-finite values."""


class ResolutionError(AstorError):
    """Requested derivative order exceeds what the grid can represent."""


class CoverageError(AstorError):
    """A flow/propagator table does not cover the requested time offset."""


class InadmissibleRateError(AstorError):
    """Decay rate does not beat the measured hyperbolic growth rate."""


class FoldError(AstorError):
    """Embedding fold-over: the torus map id + u degenerated."""


class UnsupportedInputError(AstorError):
    """Input outside the representable class (e.g. non-polynomial momenta)."""


class ExtensionError(AstorError):
    """Backward extension of an embedding family failed."""


class ConfigError(AstorError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class IntegrityError(AstorError):
    """Stored artifact is truncated or inconsistent with its sidecar."""
