"""
End-to-end workflows shared by the CLI and the tests:
encode a sequence, decode the ideal targets back, and compare with the original.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .core import Thresholds, TimeGrid
from .errors import ValidationError
from .evaluation import EvalResult, MatchConfig, evaluate_sequences, match_notes, match_pedals
from .midi_io import NoteSequence
from .noise_lab import NoiseConfig, perturb_events
from .note_decoder import decode_notes
from .pedal_decoder import decode_pedals
from .target_encoder import DEFAULT_J, EncodedNoteTargets, EncodedPedalTargets, encode_note_targets, encode_pedal_targets

logger = logging.getLogger(__name__)


def encoding_grid(seq: NoteSequence, hop_seconds: float) -> TimeGrid:
    """Grid covering the sequence duration (10 s at 10 ms -> 1001 frames)."""
    return TimeGrid.for_duration(seq.duration_seconds, hop_seconds)


def roundtrip_grid(seq: NoteSequence, hop_seconds: float, j: int) -> TimeGrid:
    """Encoding grid padded by J + 1 frames so that events at the very end keep a full triangle."""
    return TimeGrid.for_duration(seq.duration_seconds + (j + 1) * hop_seconds, hop_seconds)


def encode_sequence(
    seq: NoteSequence, grid: TimeGrid, j: int = DEFAULT_J
) -> Tuple[EncodedNoteTargets, EncodedPedalTargets]:
    return encode_note_targets(seq, grid, j), encode_pedal_targets(seq, grid, j)


def decode_targets(
    notes: EncodedNoteTargets, pedals: EncodedPedalTargets, thresholds: Thresholds = Thresholds()
) -> NoteSequence:
    """Decode target grids as if they were model outputs."""
    return NoteSequence.build(
        decode_notes(notes.as_bundle(), thresholds),
        decode_pedals(pedals.as_bundle(), thresholds),
        duration_seconds=notes.grid.duration_seconds,
    )


def safe_thresholds(thresholds: Thresholds, j: int) -> Thresholds:
    """Lower the onset/offset thresholds below 1 - 1/(2J), the smallest value a sampled peak can take."""
    floor = 1.0 - 1.0 / (2.0 * j)
    overrides = {}
    for name in ("onset", "offset", "pedal_offset"):
        if getattr(thresholds, name) >= floor:
            overrides[name] = floor / 2.0
    if overrides:
        logger.info("J=%d: lowering %s below the peak floor %.3f", j, ", ".join(overrides), floor)
    return thresholds.with_overrides(**overrides)


@dataclass(frozen=True)
class RoundtripReport:
    num_reference_notes: int
    num_decoded_notes: int
    onset_errors: np.ndarray
    offset_errors: np.ndarray
    velocity_errors: np.ndarray
    pedal_onset_errors: np.ndarray
    pedal_offset_errors: np.ndarray
    metrics: Dict[str, EvalResult]
    decoded: NoteSequence

    @staticmethod
    def _max(errors: np.ndarray) -> float:
        return float(errors.max()) if errors.size else 0.0

    @staticmethod
    def _mean(errors: np.ndarray) -> float:
        return float(errors.mean()) if errors.size else 0.0

    @property
    def max_onset_error(self) -> float:
        return self._max(self.onset_errors)

    @property
    def mean_onset_error(self) -> float:
        return self._mean(self.onset_errors)

    @property
    def max_offset_error(self) -> float:
        return self._max(self.offset_errors)

    @property
    def max_velocity_error(self) -> int:
        return int(self._max(self.velocity_errors))

    @property
    def max_pedal_onset_error(self) -> float:
        return self._max(self.pedal_onset_errors)

    @property
    def max_pedal_offset_error(self) -> float:
        return self._max(self.pedal_offset_errors)


def _pair_errors(ref: Sequence, est: Sequence, pairs, attribute: str) -> np.ndarray:
    return np.array([abs(getattr(ref[r], attribute) - getattr(est[e], attribute)) for r, e in pairs], dtype=np.float64)


def compare_sequences(
    reference: NoteSequence, decoded: NoteSequence, hop_seconds: float, base: MatchConfig = MatchConfig()
) -> RoundtripReport:
    """Error statistics of a decoded sequence against its reference, over onset-matched pairs."""
    note_pairs = match_notes(reference.notes, decoded.notes, replace(base, use_offset=False, use_velocity=False))
    pedal_pairs = match_pedals(reference.pedals, decoded.pedals, replace(base, use_offset=False))
    return RoundtripReport(
        num_reference_notes=len(reference.notes),
        num_decoded_notes=len(decoded.notes),
        onset_errors=_pair_errors(reference.notes, decoded.notes, note_pairs.matched_pairs, "onset_seconds"),
        offset_errors=_pair_errors(reference.notes, decoded.notes, note_pairs.matched_pairs, "offset_seconds"),
        velocity_errors=_pair_errors(reference.notes, decoded.notes, note_pairs.matched_pairs, "velocity"),
        pedal_onset_errors=_pair_errors(reference.pedals, decoded.pedals, pedal_pairs.matched_pairs, "onset_seconds"),
        pedal_offset_errors=_pair_errors(reference.pedals, decoded.pedals, pedal_pairs.matched_pairs, "offset_seconds"),
        metrics=evaluate_sequences(reference, decoded, hop_seconds, base),
        decoded=decoded,
    )


def roundtrip(
    seq: NoteSequence,
    hop_seconds: float = 0.01,
    j: int = DEFAULT_J,
    thresholds: Thresholds = Thresholds(),
    noise: Optional[NoiseConfig] = None,
    base: MatchConfig = MatchConfig(),
) -> RoundtripReport:
    """encode -> decode -> evaluate against the original; with `noise` the labels are perturbed before encoding."""
    source = perturb_events(seq, noise) if noise is not None else seq
    grid = roundtrip_grid(source, hop_seconds, j)
    notes, pedals = encode_sequence(source, grid, j)
    decoded = decode_targets(notes, pedals, thresholds)
    logger.debug("Round trip: %d notes in, %d notes out", len(seq.notes), len(decoded.notes))
    return compare_sequences(seq, decoded, hop_seconds, base)


@dataclass(frozen=True)
class JSweepRow:
    j: int
    max_onset_error: float
    mean_onset_error: float
    note_f1: float


def j_sweep(
    seq: NoteSequence,
    hop_seconds: float = 0.01,
    js: Sequence[int] = (2, 5, 10, 20),
    thresholds: Thresholds = Thresholds(),
) -> List[JSweepRow]:
    """Round trip the same sequence for several target widths J."""
    if not js:
        raise ValidationError("J sweep needs at least one J value")
    rows = []
    for j in js:
        report = roundtrip(seq, hop_seconds, j, safe_thresholds(thresholds, j))
        rows.append(JSweepRow(j, report.max_onset_error, report.mean_onset_error, report.metrics["Note"].f1))
    return rows


def j_sweep_to_frame(rows: Sequence[JSweepRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.j, r.max_onset_error, r.mean_onset_error, r.note_f1) for r in rows],
        columns=["j", "max_onset_error", "mean_onset_error", "note_f1"],
    )
