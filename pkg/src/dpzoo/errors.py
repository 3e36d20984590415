class DimensionError(ValueError):
    """Two vectors that must share a dimension do not."""


class EvaluationError(RuntimeError):
    """A loss evaluation returned a non-finite value."""


class NumericAbort(RuntimeError):
    """An optimizer update became non-finite.

    Carries the stage, iteration and (when known) direction index at which
    the failure was detected.
    """

    def __init__(self, message, stage=None, iteration=None, direction=None):
        super().__init__(message)
        self.stage = stage
        self.iteration = iteration
        self.direction = direction


class ConfigError(ValueError):
    """An experiment configuration failed to parse or validate."""
