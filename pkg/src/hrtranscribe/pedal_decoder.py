"""
Sustain-pedal decoding.

A pedal opens at the centre of a frame where the frame probability rises above
the pedal-onset threshold. It closes at a refined offset-regression peak or
where the frame probability falls below the pedal-frame threshold, whichever
comes first. The onset-regression grid is carried for format completeness but
is not used: pedal presses usually precede the notes and their onset peaks are
unreliable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

from .core import PedalEvent, RegressionGrid, Thresholds, TimeGrid, check_same_grid
from .errors import ValidationError
from .peak_refine import detect_and_refine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PedalGridBundle:
    frame: RegressionGrid
    onset_reg: RegressionGrid
    offset_reg: RegressionGrid

    def __post_init__(self):
        grid = check_same_grid(self.frame, self.onset_reg, self.offset_reg)
        if grid.num_keys != 1:
            raise ValidationError(f"Pedal grids need K=1, got K={grid.num_keys}")

    @property
    def grid(self) -> TimeGrid:
        return self.frame.grid


def decode_pedals(bundle: PedalGridBundle, thresholds: Thresholds = Thresholds()) -> List[PedalEvent]:
    grid = bundle.grid
    hop = grid.hop_seconds
    frame = bundle.frame.column(0)
    offset_peaks: Dict[int, float] = {
        peak.frame_index: peak.refined_time_seconds
        for peak in detect_and_refine(bundle.offset_reg.column(0), thresholds.pedal_offset, grid)
    }

    pedals: List[PedalEvent] = []
    onset: Optional[float] = None
    for t in range(1, grid.num_frames):
        if onset is None:
            if frame[t] > thresholds.pedal_onset and frame[t] > frame[t - 1]:
                onset = t * hop
            continue

        candidates = []
        if t in offset_peaks:
            candidates.append(offset_peaks[t])
        if frame[t] < thresholds.pedal_frame:
            candidates.append(t * hop)
        if not candidates:
            continue

        offset = min(candidates)
        if offset > onset:
            pedals.append(PedalEvent(onset, offset))
        else:
            logger.debug("Discarding zero-length pedal at %.6f s", onset)
        onset = None

    if onset is not None and grid.duration_seconds > onset:
        pedals.append(PedalEvent(onset, grid.duration_seconds))
    return pedals
