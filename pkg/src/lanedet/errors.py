"""Exception hierarchy for the lane detector."""

from __future__ import annotations


class LaneDetError(Exception):
    """Base class for all detector errors."""


class GeometryError(LaneDetError):
    """Invalid geometric configuration (bad camera, grid, or scene layout)."""


class HorizonError(GeometryError):
    """Image ray does not hit the ground plane in front of the camera."""


class BehindCameraError(GeometryError):
    """Ground point projects with non-positive depth."""


class ImageTooSmallError(LaneDetError):
    pass


class DegenerateWindowError(LaneDetError):
    """Not enough support in a window to fit a line."""


class InsufficientSupportError(LaneDetError):
    """Fewer nonzero pixels than the requested sample size."""


class DomainError(LaneDetError, ValueError):
    pass


class ZeroLengthError(LaneDetError, ValueError):
    pass


class RankDeficientError(LaneDetError):
    """Least-squares system does not determine all four control points."""


class FormatError(LaneDetError):
    """Malformed image file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(LaneDetError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FrameMismatchError(LaneDetError):
    """Detection and label frame indices do not line up."""
