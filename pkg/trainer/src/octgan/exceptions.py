"""Error taxonomy: usage errors vs malformed files vs failed runs."""


class TrainerError(Exception):
    """Base class for errors raised by this package."""


class ArgumentError(TrainerError):
    """A parameter or combination of parameters is invalid."""


class FormatError(TrainerError):
    """A volume file or pairs manifest is malformed."""


class TrainingDiverged(TrainerError):
    """Optimization produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
