"""
Encode ground-truth events into training targets.

Each frame of an onset/offset regression column holds how far its centre is
from the nearest event: g = 1 - |d| / (J * hop) within J frames, 0 beyond.
Nearby events on the same key combine by elementwise maximum.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .core import (
    MAX_VELOCITY,
    NUM_PIANO_KEYS,
    TIME_EPSILON,
    RegressionGrid,
    TimeGrid,
    check_pedals_disjoint,
    nearest_frame,
)
from .errors import ValidationError
from .midi_io import NoteSequence
from .note_decoder import NoteGridBundle
from .pedal_decoder import PedalGridBundle

logger = logging.getLogger(__name__)

DEFAULT_J = 5


@dataclass(frozen=True)
class EncodedNoteTargets:
    onset_reg: RegressionGrid
    offset_reg: RegressionGrid
    frame_roll: RegressionGrid
    velocity_roll: RegressionGrid
    onset_mask: RegressionGrid

    @property
    def grid(self) -> TimeGrid:
        return self.frame_roll.grid

    def as_bundle(self) -> NoteGridBundle:
        """Treat the targets as ideal model outputs."""
        return NoteGridBundle(
            frame=self.frame_roll, onset_reg=self.onset_reg, offset_reg=self.offset_reg, velocity=self.velocity_roll
        )


@dataclass(frozen=True)
class EncodedPedalTargets:
    onset_reg: RegressionGrid
    offset_reg: RegressionGrid
    frame_roll: RegressionGrid

    @property
    def grid(self) -> TimeGrid:
        return self.frame_roll.grid

    def as_bundle(self) -> PedalGridBundle:
        return PedalGridBundle(frame=self.frame_roll, onset_reg=self.onset_reg, offset_reg=self.offset_reg)


def _check_j(j: int) -> None:
    if int(j) != j or j < 1:
        raise ValidationError(f"J must be a positive integer, got {j}")


def _clip_time(grid: TimeGrid, t: float) -> float:
    return min(max(t, 0.0), grid.duration_seconds)


def _triangle(frame_times: np.ndarray, t: float, width: float) -> np.ndarray:
    return np.clip(1.0 - np.abs(frame_times - t) / width, 0.0, 1.0)


def triangle_peak_frame(grid: TimeGrid, t: float, j: int = DEFAULT_J) -> int:
    """First frame where the triangle of an event at t is highest.

    Equal to nearest_frame except when both neighbours round to the same
    value; then the earlier frame wins, as the peak picker does.
    """
    t = _clip_time(grid, float(t))
    centre = nearest_frame(grid, t)
    lo = max(centre - 1, 0)
    hi = min(centre + 1, grid.num_frames - 1)
    times = np.arange(lo, hi + 1, dtype=np.float64) * grid.hop_seconds
    return lo + int(np.argmax(_triangle(times, t, j * grid.hop_seconds)))


def encode_regression_track(event_times: Iterable[float], grid: TimeGrid, j: int = DEFAULT_J) -> np.ndarray:
    """One T-length regression column: max over events of max(0, 1 - |i*hop - t| / (J*hop))."""
    _check_j(j)
    hop = grid.hop_seconds
    width = j * hop
    times = grid.frame_times()
    column = np.zeros(grid.num_frames, dtype=np.float64)

    for t in event_times:
        t = _clip_time(grid, float(t))
        lo = max(int(math.floor((t - width) / hop)), 0)
        hi = min(int(math.ceil((t + width) / hop)), grid.num_frames - 1)
        triangle = _triangle(times[lo:hi + 1], t, width)
        np.maximum(column[lo:hi + 1], triangle, out=column[lo:hi + 1])
    return column


def _roll_column(intervals: Iterable[Tuple[float, float]], grid: TimeGrid) -> np.ndarray:
    """Binary activity: frame centres in [onset, offset), plus the onset's nearest frame."""
    hop = grid.hop_seconds
    column = np.zeros(grid.num_frames, dtype=np.float64)
    for onset, offset in intervals:
        onset = _clip_time(grid, onset)
        first = max(int(math.ceil(onset / hop - TIME_EPSILON)), 0)
        end = min(int(math.ceil(offset / hop - TIME_EPSILON)), grid.num_frames)
        if end > first:
            column[first:end] = 1.0
        column[nearest_frame(grid, onset)] = 1.0
    return column


def _note_grid(grid: TimeGrid) -> TimeGrid:
    if grid.num_keys != NUM_PIANO_KEYS:
        return grid.with_keys(NUM_PIANO_KEYS)
    return grid


def _group_by_key(seq: NoteSequence) -> Dict[int, List]:
    by_key: Dict[int, List] = defaultdict(list)
    for note in seq.notes:
        by_key[note.key].append(note)
    return by_key


def encode_frame_roll(seq: NoteSequence, grid: TimeGrid) -> RegressionGrid:
    """Rasterise the notes of a sequence into a binary T x 88 roll."""
    grid = _note_grid(grid)
    values = np.zeros((grid.num_frames, grid.num_keys))
    for key, notes in _group_by_key(seq).items():
        values[:, key] = _roll_column(((n.onset_seconds, n.offset_seconds) for n in notes), grid)
    return RegressionGrid(grid, values)


def encode_pedal_roll(seq: NoteSequence, grid: TimeGrid) -> RegressionGrid:
    """Rasterise the pedal spans of a sequence into a binary T x 1 roll."""
    grid = grid.with_keys(1)
    column = _roll_column(((p.onset_seconds, p.offset_seconds) for p in seq.pedals), grid)
    return RegressionGrid(grid, column)


def encode_note_targets(seq: NoteSequence, grid: TimeGrid, j: int = DEFAULT_J) -> EncodedNoteTargets:
    _check_j(j)
    grid = _note_grid(grid)
    shape = (grid.num_frames, grid.num_keys)
    onset_reg = np.zeros(shape)
    offset_reg = np.zeros(shape)
    frame_roll = np.zeros(shape)
    velocity_roll = np.zeros(shape)
    onset_mask = np.zeros(shape)

    for key, notes in _group_by_key(seq).items():
        onset_reg[:, key] = encode_regression_track([n.onset_seconds for n in notes], grid, j)
        offset_reg[:, key] = encode_regression_track([n.offset_seconds for n in notes], grid, j)
        frame_roll[:, key] = _roll_column(((n.onset_seconds, n.offset_seconds) for n in notes), grid)
        for note in notes:
            frame = triangle_peak_frame(grid, note.onset_seconds, j)
            onset_mask[frame, key] = 1.0
            velocity_roll[frame, key] = max(velocity_roll[frame, key], note.velocity / MAX_VELOCITY)

    logger.debug("Encoded %d notes on a %dx%d grid (J=%d)", len(seq.notes), grid.num_frames, grid.num_keys, j)
    return EncodedNoteTargets(
        onset_reg=RegressionGrid(grid, onset_reg),
        offset_reg=RegressionGrid(grid, offset_reg),
        frame_roll=RegressionGrid(grid, frame_roll),
        velocity_roll=RegressionGrid(grid, velocity_roll),
        onset_mask=RegressionGrid(grid, onset_mask),
    )


def encode_pedal_targets(seq: NoteSequence, grid: TimeGrid, j: int = DEFAULT_J) -> EncodedPedalTargets:
    _check_j(j)
    check_pedals_disjoint(list(seq.pedals))
    grid = grid.with_keys(1)
    onsets: Sequence[float] = [p.onset_seconds for p in seq.pedals]
    offsets: Sequence[float] = [p.offset_seconds for p in seq.pedals]
    return EncodedPedalTargets(
        onset_reg=RegressionGrid(grid, encode_regression_track(onsets, grid, j)),
        offset_reg=RegressionGrid(grid, encode_regression_track(offsets, grid, j)),
        frame_roll=encode_pedal_roll(seq, grid),
    )
