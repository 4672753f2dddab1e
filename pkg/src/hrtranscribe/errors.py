from __future__ import annotations

from typing import Optional


class HRTError(Exception):
    """Base class for every error raised by hrtranscribe."""


class ValidationError(HRTError, ValueError):
    """Raised when a value violates a domain invariant (pitch range, grid values, thresholds...)."""


class ConfigError(HRTError):
    """Raised when an environment variable or CLI flag cannot be parsed."""


class MidiParseError(HRTError):
    """Raised when a Standard MIDI File cannot be decoded.

    `offset` is the byte offset where decoding failed, when it is known.
    """

    def __init__(self, message: str, offset: Optional[int] = None, path: Optional[str] = None):
        self.offset = offset
        self.path = path
        super().__init__(message)

    def __str__(self) -> str:
        text = super().__str__()
        if self.offset is not None:
            text = f"{text} (byte offset {self.offset})"
        if self.path:
            text = f"{self.path}: {text}"
        return text


class MidiWriteError(HRTError):
    """Raised when events cannot be represented in a Standard MIDI File."""


class GridFormatError(HRTError):
    """Raised when an HRTG or CSV grid is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class BundleError(HRTError):
    """Raised when a grid bundle directory is incomplete."""

    def __init__(self, directory: str, missing: list[str]):
        self.directory = directory
        self.missing = missing
        super().__init__(f"Bundle '{directory}' is missing: {', '.join(missing)}")
