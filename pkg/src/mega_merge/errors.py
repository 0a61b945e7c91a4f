"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class MegaError(Exception):
    exit_code = 1


class ConfigError(MegaError):
    """Bad usage, unknown config key, missing input."""

    exit_code = 2


class DataError(MegaError):
    exit_code = 3


class NumericError(MegaError):
    exit_code = 4


class ShapeMismatchError(DataError, ValueError):
    pass


class IncompatibleGenomesError(DataError, ValueError):
    pass


class CheckpointError(DataError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class LengthMismatchError(CheckpointError):
    pass


class NonFiniteValueError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class DivergenceError(NumericError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class FitnessEvaluationError(MegaError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"fitness evaluation failed for individual {index}: {cause!r}")
        self.exit_code = getattr(cause, "exit_code", 1)


class MergeNodeError(MegaError):
    def __init__(self, level, index, cause):
        self.level = level
        self.index = index
        self.cause = cause
        super().__init__(f"merge node (level={level}, pair={index}) failed: {cause}")
        self.exit_code = getattr(cause, "exit_code", 1)
