"""
Domain types shared by every module: the frame/time coordinate system,
note and pedal events, value grids and decision thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Any

import numpy as np

from .errors import ValidationError

MIN_PITCH = 21
MAX_PITCH = 108
NUM_PIANO_KEYS = MAX_PITCH - MIN_PITCH + 1
MIN_VELOCITY = 1
MAX_VELOCITY = 127

# Slack used when a time lands (up to float noise) exactly on a frame boundary.
TIME_EPSILON = 1e-9


def pitch_to_key(pitch: int) -> int:
    if not MIN_PITCH <= pitch <= MAX_PITCH:
        raise ValidationError(f"MIDI pitch {pitch} is outside the piano range [{MIN_PITCH}, {MAX_PITCH}]")
    return pitch - MIN_PITCH


def key_to_pitch(key: int) -> int:
    if not 0 <= key < NUM_PIANO_KEYS:
        raise ValidationError(f"Key index {key} is outside [0, {NUM_PIANO_KEYS - 1}]")
    return key + MIN_PITCH


@dataclass(frozen=True)
class TimeGrid:
    """Frame coordinate system: frame i is centred at i * hop_seconds."""

    hop_seconds: float
    num_frames: int
    num_keys: int = NUM_PIANO_KEYS

    def __post_init__(self):
        if not (self.hop_seconds > 0 and math.isfinite(self.hop_seconds)):
            raise ValidationError(f"hop_seconds must be positive, got {self.hop_seconds}")
        if int(self.num_frames) != self.num_frames or self.num_frames < 1:
            raise ValidationError(f"num_frames must be a positive integer, got {self.num_frames}")
        if int(self.num_keys) != self.num_keys or self.num_keys < 1:
            raise ValidationError(f"num_keys must be a positive integer, got {self.num_keys}")

    @classmethod
    def for_duration(cls, duration_seconds: float, hop_seconds: float, num_keys: int = NUM_PIANO_KEYS) -> "TimeGrid":
        """Grid covering [0, duration]: a 10 s clip at 10 ms hop has 1001 frames."""
        if duration_seconds < 0:
            raise ValidationError(f"duration must be non-negative, got {duration_seconds}")
        num_frames = int(round(duration_seconds / hop_seconds)) + 1
        return cls(hop_seconds=hop_seconds, num_frames=num_frames, num_keys=num_keys)

    @property
    def duration_seconds(self) -> float:
        return (self.num_frames - 1) * self.hop_seconds

    def with_keys(self, num_keys: int) -> "TimeGrid":
        return replace(self, num_keys=num_keys)

    def frame_times(self) -> np.ndarray:
        return np.arange(self.num_frames, dtype=np.float64) * self.hop_seconds


def frame_center_time(grid: TimeGrid, i: int) -> float:
    if not 0 <= i < grid.num_frames:
        raise ValidationError(f"Frame index {i} is outside [0, {grid.num_frames - 1}]")
    return i * grid.hop_seconds


def nearest_frame(grid: TimeGrid, t: float) -> int:
    """Index of the frame centre closest to t; ties go to the earlier frame; clamped to the grid."""
    if t < 0:
        raise ValidationError(f"Time must be non-negative, got {t}")
    hop = grid.hop_seconds
    last = grid.num_frames - 1
    below = min(int(math.floor(t / hop)), last)
    above = min(below + 1, last)
    # Mismas distancias |i*hop - t| que usan los triángulos del encoder
    return below if abs(below * hop - t) <= abs(above * hop - t) else above


def nearest_frames(grid: TimeGrid, times: Any) -> np.ndarray:
    """Vectorised nearest_frame."""
    times = np.asarray(times, dtype=np.float64)
    hop = grid.hop_seconds
    last = grid.num_frames - 1
    below = np.clip(np.floor(times / hop).astype(np.int64), 0, last)
    above = np.minimum(below + 1, last)
    closer_below = np.abs(below * hop - times) <= np.abs(above * hop - times)
    return np.where(closer_below, below, above)


@dataclass(frozen=True)
class NoteEvent:
    """One transcribed note: <pitch, onset, offset, velocity>."""

    pitch: int
    onset_seconds: float
    offset_seconds: float
    velocity: int

    def __post_init__(self):
        pitch_to_key(self.pitch)
        if not MIN_VELOCITY <= self.velocity <= MAX_VELOCITY:
            raise ValidationError(f"Velocity {self.velocity} is outside [{MIN_VELOCITY}, {MAX_VELOCITY}]")
        if self.onset_seconds < 0:
            raise ValidationError(f"Note onset {self.onset_seconds} is negative")
        if not self.onset_seconds < self.offset_seconds:
            raise ValidationError(
                f"Note {self.pitch}: onset {self.onset_seconds} must precede offset {self.offset_seconds}"
            )

    @property
    def key(self) -> int:
        return self.pitch - MIN_PITCH

    @property
    def sort_key(self) -> tuple[float, int]:
        return (self.onset_seconds, self.pitch)

    @property
    def duration_seconds(self) -> float:
        return self.offset_seconds - self.onset_seconds


@dataclass(frozen=True, order=True)
class PedalEvent:
    """One sustain-pedal span."""

    onset_seconds: float
    offset_seconds: float

    def __post_init__(self):
        if self.onset_seconds < 0:
            raise ValidationError(f"Pedal onset {self.onset_seconds} is negative")
        if not self.onset_seconds < self.offset_seconds:
            raise ValidationError(
                f"Pedal onset {self.onset_seconds} must precede offset {self.offset_seconds}"
            )

    @property
    def duration_seconds(self) -> float:
        return self.offset_seconds - self.onset_seconds


def check_pedals_disjoint(pedals: list[PedalEvent]) -> None:
    """Raise if pedal spans are unsorted or overlap."""
    for previous, current in zip(pedals, pedals[1:]):
        if current.onset_seconds < previous.offset_seconds:
            raise ValidationError(
                f"Pedal spans overlap: [{previous.onset_seconds}, {previous.offset_seconds}) "
                f"and [{current.onset_seconds}, {current.offset_seconds})"
            )


class RegressionGrid:
    """A T x K matrix of values in [0, 1] on a TimeGrid (targets, predictions or binary rolls)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: TimeGrid, values: Any):
        array = np.array(values, dtype=np.float64)
        if array.ndim == 1:
            array = array[:, None]
        if array.shape != (grid.num_frames, grid.num_keys):
            raise ValidationError(
                f"Grid values have shape {array.shape}, expected ({grid.num_frames}, {grid.num_keys})"
            )
        if np.isnan(array).any():
            raise ValidationError("Grid values contain NaN")
        if array.size and (array.min() < 0.0 or array.max() > 1.0):
            raise ValidationError(
                f"Grid values must lie in [0, 1], found range [{array.min()}, {array.max()}]"
            )
        array.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", array)

    def __setattr__(self, name, value):
        raise AttributeError("RegressionGrid is immutable")

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "RegressionGrid":
        return cls(grid, np.zeros((grid.num_frames, grid.num_keys)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, key: int) -> np.ndarray:
        return self.values[:, key]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegressionGrid):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"RegressionGrid(T={self.grid.num_frames}, K={self.grid.num_keys}, hop={self.grid.hop_seconds})"


def check_same_grid(*grids: RegressionGrid) -> TimeGrid:
    first = grids[0].grid
    for other in grids[1:]:
        if other.grid != first:
            raise ValidationError(f"Grids do not share one TimeGrid: {first} vs {other.grid}")
    return first


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds of the note and pedal decoders (0.3 each by default)."""

    onset: float = 0.3
    offset: float = 0.3
    frame: float = 0.3
    pedal_onset: float = 0.3
    pedal_offset: float = 0.3
    pedal_frame: float = 0.3

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not 0.0 < value < 1.0:
                raise ValidationError(f"Threshold '{field.name}' must lie in (0, 1), got {value}")

    @classmethod
    def uniform(cls, value: float) -> "Thresholds":
        return cls(*(value,) * len(fields(cls)))

    def with_overrides(self, **overrides: float | None) -> "Thresholds":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})
