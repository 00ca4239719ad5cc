"""Exception hierarchy shared by every ffca module."""


class FFCAError(Exception):
    """Base class for all ffca errors."""


class InvalidArchitectureError(FFCAError, ValueError):
    pass


class DimensionMismatchError(FFCAError, ValueError):
    pass


class SmoothingRequiredError(FFCAError, ValueError):
    """Second derivatives were requested from a ReLU-mode model."""


class CostGuardError(FFCAError, ValueError):
    """Full Hessian requested for more features than the configured cap."""


class DivergenceError(FFCAError, ArithmeticError):
    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")


class InsufficientDataError(FFCAError, ValueError):
    pass


class UndefinedCorrelationError(FFCAError, ValueError):
    pass


class UndefinedTakeoffError(FFCAError, ValueError):
    pass


class InteractionUnavailableError(FFCAError, ValueError):
    """An operation needs interaction scores but only a diagonal run is available."""


class SingularSystemError(FFCAError, ArithmeticError):
    pass


class DataError(FFCAError, ValueError):
    """Malformed or missing input data (CSV files, dataset specs)."""


class ConfigError(FFCAError, ValueError):
    pass


class FeatureSetDriftError(FFCAError, ValueError):
    """Captures in one history disagree on the feature set."""
