"""Exception types shared across the package."""


class SlidescribeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SlidescribeError, ValueError):
    """Invalid configuration value (non-positive dimension, bad enum, ...)."""


class ShapeError(SlidescribeError, ValueError):
    """Tensor/array shapes are inconsistent with the operation's contract."""


class NumericError(SlidescribeError, ArithmeticError):
    """Non-finite values encountered where finite math is required."""


class MaskFormatError(SlidescribeError, ValueError):
    """Mask container stream is malformed.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DatasetError(SlidescribeError, ValueError):
    """Dataset root is missing, empty, or internally inconsistent."""


class DocumentValidationError(SlidescribeError, ValueError):
    """A slide document violates the published schema."""


class TrainingDiverged(SlidescribeError, RuntimeError):
    """Loss became non-finite during training.

    ``diagnostics`` holds a snapshot of the offending step.
    """

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics
