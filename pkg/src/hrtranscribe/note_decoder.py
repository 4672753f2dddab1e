"""
Note decoding: frame, onset-regression, offset-regression and velocity grids
to <pitch, onset, offset, velocity> events.

Per key:
  * onsets are thresholded local maxima of the onset column, refined to sub-frame times;
  * a note ends at the earliest of: a refined offset peak, the frame column
    dropping below the frame threshold, the next onset on the same key, or the
    last frame of the clip;
  * velocity is the velocity grid at the onset frame times 128, clamped to [1, 127].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .core import (
    MAX_VELOCITY,
    MIN_VELOCITY,
    NUM_PIANO_KEYS,
    NoteEvent,
    RegressionGrid,
    Thresholds,
    TimeGrid,
    check_same_grid,
    key_to_pitch,
)
from .errors import ValidationError
from .peak_refine import RefinedPeak, detect_and_refine

logger = logging.getLogger(__name__)

VELOCITY_SCALE = 128


@dataclass(frozen=True)
class NoteGridBundle:
    frame: RegressionGrid
    onset_reg: RegressionGrid
    offset_reg: RegressionGrid
    velocity: RegressionGrid

    def __post_init__(self):
        grid = check_same_grid(self.frame, self.onset_reg, self.offset_reg, self.velocity)
        if grid.num_keys != NUM_PIANO_KEYS:
            raise ValidationError(f"Note grids need K={NUM_PIANO_KEYS} keys, got K={grid.num_keys}")

    @property
    def grid(self) -> TimeGrid:
        return self.frame.grid


def _round_half_away(value: float) -> int:
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def velocity_from_probability(p: float) -> int:
    """Rescale a normalised velocity by 128 and clamp to the writable MIDI range."""
    return min(max(_round_half_away(p * VELOCITY_SCALE), MIN_VELOCITY), MAX_VELOCITY)


def _first_frame_below(frame_column: np.ndarray, start: int, threshold: float) -> Optional[int]:
    below = np.flatnonzero(frame_column[start:] < threshold)
    return int(start + below[0]) if below.size else None


def decode_key(
    frame_column: np.ndarray,
    onset_column: np.ndarray,
    offset_column: np.ndarray,
    velocity_column: np.ndarray,
    grid: TimeGrid,
    thresholds: Thresholds,
    pitch: int,
) -> List[NoteEvent]:
    """Decode a single key's columns into notes."""
    onsets = detect_and_refine(onset_column, thresholds.onset, grid)
    if not onsets:
        return []
    offsets = detect_and_refine(offset_column, thresholds.offset, grid)
    clip_end = grid.duration_seconds

    notes: List[NoteEvent] = []
    for index, onset in enumerate(onsets):
        candidates = [clip_end]

        # Offset peak strictly after the onset frame (earlier peaks belong to earlier notes)
        peak: Optional[RefinedPeak] = next((p for p in offsets if p.frame_index > onset.frame_index), None)
        if peak is not None:
            candidates.append(peak.refined_time_seconds)

        drop = _first_frame_below(frame_column, onset.frame_index + 1, thresholds.frame)
        if drop is not None:
            candidates.append(drop * grid.hop_seconds)

        if index + 1 < len(onsets):
            candidates.append(onsets[index + 1].refined_time_seconds)

        offset_time = min(candidates)
        if not offset_time > onset.refined_time_seconds:
            logger.debug("Discarding zero-length note %d at %.6f s", pitch, onset.refined_time_seconds)
            continue

        velocity = velocity_from_probability(float(velocity_column[onset.frame_index]))
        notes.append(NoteEvent(pitch, onset.refined_time_seconds, offset_time, velocity))
    return notes


def decode_notes(bundle: NoteGridBundle, thresholds: Thresholds = Thresholds()) -> List[NoteEvent]:
    """Decode the four note grids into notes sorted by (onset, pitch)."""
    grid = bundle.grid
    notes: List[NoteEvent] = []
    for key in range(grid.num_keys):
        onset_column = bundle.onset_reg.column(key)
        if not onset_column.max(initial=0.0) > thresholds.onset:
            continue
        notes.extend(
            decode_key(
                bundle.frame.column(key),
                onset_column,
                bundle.offset_reg.column(key),
                bundle.velocity.column(key),
                grid,
                thresholds,
                key_to_pitch(key),
            )
        )
    notes.sort(key=lambda n: n.sort_key)
    return notes
