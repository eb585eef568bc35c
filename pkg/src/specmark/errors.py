"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class SpecmarkError(Exception):
    """Base class for all library errors."""


class GridMismatchError(SpecmarkError, ValueError):
    """Spectral operands live on different wavelength grids."""


class FixtureError(SpecmarkError, ValueError):
    """A data fixture is missing, malformed, or does not cover the grid."""


class ConfigError(SpecmarkError, ValueError):
    """Invalid run manifest, sweep, or capture configuration."""


class DivergenceError(SpecmarkError, FloatingPointError):
    """The objective became non-finite during optimization."""

    def __init__(self, message: str, iteration: int | None = None, x=None, y=None):
        super().__init__(message)
        self.iteration = iteration
        self.x = None if x is None else [float(v) for v in x]
        self.y = None if y is None else [float(v) for v in y]

    def to_dict(self) -> dict:
        return {
            "error": "divergence",
            "message": str(self),
            "iteration": self.iteration,
            "x": self.x,
            "y": self.y,
        }


class DecodeError(SpecmarkError):
    """Bits could not be recovered from a frame sequence."""


class SceneTooDarkError(DecodeError):
    def __init__(self, message: str = "scene too dark"):
        super().__init__(message)


class NoSignalError(DecodeError):
    def __init__(self, message: str = "no signal detected"):
        super().__init__(message)


class ContainerError(SpecmarkError, OSError):
    """Frame container is unreadable, truncated, or corrupt."""
