"""Exception hierarchy shared by all tpcomb modules."""


class TpcError(Exception):
    """Base class for every error raised by tpcomb."""


class ConfigError(TpcError, ValueError):
    """A configuration or input file violates its schema."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NonPhysicalStateError(TpcError, ValueError):
    """A matrix is not a valid two-qubit density matrix."""


class SaturationError(TpcError):
    """Expected detector count rate exceeds the detector's maximum rate."""


class AnalysisError(TpcError):
    """A histogram does not support the requested estimate."""


class ReconstructionError(TpcError):
    """Tomographic reconstruction failed.

    ``best`` carries the best iterate found before giving up, when there is one.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
