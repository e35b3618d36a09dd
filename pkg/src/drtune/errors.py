"""Exception types shared across the package."""


class DrtuneError(Exception):
    """Base class for all package-specific errors."""


class ParameterShapeError(DrtuneError):
    """A physical parameter vector does not match the environment."""


class NumericInputError(DrtuneError):
    """Non-finite or wrongly shaped numeric input to a policy operation."""


class EpisodeFinishedError(DrtuneError):
    """step() was called on an episode that already terminated."""


class ProtocolError(DrtuneError):
    """An optimizer was driven out of its ask/tell contract."""


class TrainingDivergedError(DrtuneError):
    """Policy optimization produced a non-finite loss."""

    def __init__(self, message: str, update_index: int | None = None):
        super().__init__(message)
        self.update_index = update_index


class OptimizationFailedError(DrtuneError):
    """The outer optimizer could not score enough candidates."""


class ConfigError(DrtuneError):
    """Invalid experiment configuration (file or programmatic)."""


class RecordParseError(DrtuneError):
    """A record file could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number
