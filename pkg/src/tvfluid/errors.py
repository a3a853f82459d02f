"""Exception hierarchy shared by all modules."""


class TvFluidError(Exception):
    """Base class for every error raised by tvfluid."""


class DomainError(TvFluidError, ValueError):
    """An argument lies outside the domain of the function."""


class ConfigurationError(TvFluidError, ValueError):
    """Model or solver inputs are inconsistent or unsupported."""


class DivergenceError(TvFluidError, RuntimeError):
    """A fixed-point or series computation failed to converge."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class CorrespondenceError(ConfigurationError):
    """Elapsed-time initial data cannot be mapped to residual form."""


class InternalConsistencyError(TvFluidError, RuntimeError):
    """A derived quantity violates a structural property beyond tolerance."""


class ScenarioError(TvFluidError, ValueError):
    """Scenario file failed schema validation."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message
