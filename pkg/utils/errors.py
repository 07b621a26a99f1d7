from typing import Optional

from config.config import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


class EngineError(Exception):
    """Base class for every error raised by the engine"""

    exit_code = EXIT_DATA


class UsageError(EngineError):
    """Invalid command-line usage or arguments"""

    exit_code = EXIT_USAGE


class DataError(EngineError):
    """Invalid, missing or inconsistent input data"""

    exit_code = EXIT_DATA


class ConfigError(DataError):
    """Unreadable or invalid run configuration"""


class ShapeMismatchError(DataError):
    """Two tensors disagree on a named dimension"""

    def __init__(
        self,
        op: str,
        dimension: str,
        expected: Optional[int] = None,
        actual: Optional[int] = None,
        detail: Optional[str] = None,
    ):
        self.op = op
        self.dimension = dimension
        self.expected = expected
        self.actual = actual
        message = f"{op}: mismatch in {dimension}"
        if expected is not None or actual is not None:
            message += f" (expected {expected}, got {actual})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class CheckpointError(DataError):
    """Corrupt, truncated or incompatible checkpoint file"""


class FlowFileError(DataError):
    """Corrupt or truncated flow file"""


class ImageTooSmallError(DataError):
    """Source image cannot hold the requested crop"""


class EmptyMaskError(DataError):
    """A metric was asked to average over zero pixels"""


class NumericError(EngineError):
    """Numerical failure"""

    exit_code = EXIT_NUMERIC


class NonScalarLossError(NumericError):
    """backward() called on a tensor that is not 1x1x1x1"""


class MissingGradientError(NumericError):
    """An optimizer step found a parameter without a gradient"""


class TrainingDivergedError(NumericError):
    """The training loss became NaN or infinite"""


class DegenerateTransformError(NumericError):
    """Every retry produced a non-invertible transform"""
