"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value (bad fraction, rate, schedule, ...)."""


class DataFormatError(ValueError):
    """Malformed input file (CSV or IDX)."""


class ShapeMismatchError(ValueError):
    """Feature dimension does not match the model's input layer."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class MetricUndefinedError(ValueError):
    """Metric has no defined value on this input (e.g. single-class AUC)."""


class UnsupportedAnalysisError(ValueError):
    """Analysis requires data the input does not carry (e.g. noise flags)."""
