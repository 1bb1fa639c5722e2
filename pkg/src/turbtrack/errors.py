"""Exception types raised across the package."""

from __future__ import annotations


class TurbTrackError(Exception):
    """Base class for all package errors."""


class SequenceLoadError(TurbTrackError):
    """An image sequence could not be loaded."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class NoFilesMatchedError(SequenceLoadError):
    pass


class DimensionMismatchError(SequenceLoadError):
    pass


class DecodeError(SequenceLoadError):
    pass


class FlowFormatError(TurbTrackError):
    """A flow file is malformed."""


class BadMagicError(FlowFormatError):
    pass


class TruncatedPayloadError(FlowFormatError):
    pass


class PyramidTooSmallError(TurbTrackError):
    pass


class KalmanError(TurbTrackError):
    """Raised when the innovation covariance cannot be inverted."""


class ConfigError(TurbTrackError):
    """Invalid pipeline configuration."""


class StageError(TurbTrackError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
