"""
Transcription evaluation: tolerance-parameterised note/pedal matching and
frame-level metrics.

A reference/estimate pair is admissible when the onsets agree within the onset
tolerance (and, optionally, the offsets within max(tolerance, ratio * reference
duration), and the normalised velocities within the velocity tolerance).
The reported matching is a maximum-cardinality one-to-one matching of the
admissible pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .core import MAX_VELOCITY, NoteEvent, PedalEvent, RegressionGrid, TimeGrid
from .errors import ValidationError
from .midi_io import NoteSequence
from .target_encoder import encode_frame_roll, encode_pedal_roll

logger = logging.getLogger(__name__)

# Onset tolerance grid of the onset sweep (2 ms .. 100 ms) and offset grid of the offset sweep.
ONSET_SWEEP_TOLERANCES = (0.002, 0.005, 0.01, 0.02, 0.05, 0.1)
OFFSET_SWEEP_TOLERANCES = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
SWEEP_FIXED_ONSET_TOLERANCE = 0.05

# Float slack so that a difference of exactly the tolerance is admitted.
_TOLERANCE_SLACK = 1e-9


@dataclass(frozen=True)
class MatchConfig:
    onset_tolerance_seconds: float = 0.05
    use_offset: bool = False
    offset_tolerance_seconds: float = 0.05
    offset_ratio: float = 0.2
    use_velocity: bool = False
    velocity_tolerance: float = 0.1
    empty_score: float = 1.0

    def __post_init__(self):
        if not self.onset_tolerance_seconds > 0:
            raise ValidationError(f"Onset tolerance must be positive, got {self.onset_tolerance_seconds}")
        if not self.offset_tolerance_seconds > 0:
            raise ValidationError(f"Offset tolerance must be positive, got {self.offset_tolerance_seconds}")
        if self.offset_ratio < 0:
            raise ValidationError(f"Offset ratio must be non-negative, got {self.offset_ratio}")
        if not self.velocity_tolerance > 0:
            raise ValidationError(f"Velocity tolerance must be positive, got {self.velocity_tolerance}")

    @classmethod
    def onset_only(cls, **kwargs) -> "MatchConfig":
        return cls(use_offset=False, use_velocity=False, **kwargs)

    @classmethod
    def with_offset(cls, **kwargs) -> "MatchConfig":
        return cls(use_offset=True, use_velocity=False, **kwargs)

    @classmethod
    def with_offset_velocity(cls, **kwargs) -> "MatchConfig":
        return cls(use_offset=True, use_velocity=True, **kwargs)


@dataclass(frozen=True)
class EvalResult:
    precision: float
    recall: float
    f1: float
    matched_pairs: Tuple[Tuple[int, int], ...] = ()

    @classmethod
    def from_counts(
        cls,
        matches: int,
        num_ref: int,
        num_est: int,
        pairs: Sequence[Tuple[int, int]] = (),
        empty_score: float = 1.0,
    ) -> "EvalResult":
        if num_ref == 0 and num_est == 0:
            return cls(empty_score, empty_score, empty_score, tuple(pairs))
        precision = matches / num_est if num_est else 0.0
        recall = matches / num_ref if num_ref else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(precision, recall, f1, tuple(pairs))

    def as_line(self, label: str) -> str:
        return f"{label}: P={self.precision * 100:.2f}% R={self.recall * 100:.2f}% F1={self.f1 * 100:.2f}%"


# ---------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------
def maximum_matching(admissible: np.ndarray) -> List[Tuple[int, int]]:
    """Maximum-cardinality matching of a boolean (num_ref x num_est) admissibility matrix."""
    admissible = np.asarray(admissible, dtype=bool)
    if admissible.size == 0 or not admissible.any():
        return []
    matched = maximum_bipartite_matching(csr_matrix(admissible.astype(np.int8)), perm_type="column")
    return [(int(r), int(e)) for r, e in enumerate(matched) if e >= 0]


def _within(diff: np.ndarray, tolerance) -> np.ndarray:
    return np.abs(diff) <= np.asarray(tolerance) + _TOLERANCE_SLACK


def _timing_admissible(
    ref_on: np.ndarray, ref_off: np.ndarray, est_on: np.ndarray, est_off: np.ndarray, cfg: MatchConfig
) -> np.ndarray:
    admissible = _within(ref_on[:, None] - est_on[None, :], cfg.onset_tolerance_seconds)
    if cfg.use_offset:
        window = np.maximum(cfg.offset_tolerance_seconds, cfg.offset_ratio * (ref_off - ref_on))
        admissible &= _within(ref_off[:, None] - est_off[None, :], window[:, None])
    return admissible


def velocity_scale(ref_velocities: np.ndarray, est_velocities: np.ndarray) -> float:
    """Least-squares factor s minimising sum (v_ref - s * v_est)^2."""
    denominator = float(np.dot(est_velocities, est_velocities))
    if denominator == 0.0:
        return 1.0
    return float(np.dot(ref_velocities, est_velocities)) / denominator


def match_notes(ref: Sequence[NoteEvent], est: Sequence[NoteEvent], cfg: MatchConfig = MatchConfig()) -> EvalResult:
    if not ref or not est:
        return EvalResult.from_counts(0, len(ref), len(est), empty_score=cfg.empty_score)

    ref_on = np.array([n.onset_seconds for n in ref])
    ref_off = np.array([n.offset_seconds for n in ref])
    est_on = np.array([n.onset_seconds for n in est])
    est_off = np.array([n.offset_seconds for n in est])
    same_pitch = np.array([n.pitch for n in ref])[:, None] == np.array([n.pitch for n in est])[None, :]

    admissible = same_pitch & _timing_admissible(ref_on, ref_off, est_on, est_off, cfg)

    if cfg.use_velocity:
        ref_vel = np.array([n.velocity for n in ref], dtype=np.float64) / MAX_VELOCITY
        est_vel = np.array([n.velocity for n in est], dtype=np.float64) / MAX_VELOCITY
        # The scale is fitted on the timing-only matching, then applied to every candidate.
        timing_pairs = maximum_matching(admissible)
        if timing_pairs:
            rows, cols = (np.array(idx) for idx in zip(*timing_pairs))
            scale = velocity_scale(ref_vel[rows], est_vel[cols])
        else:
            scale = 1.0
        logger.debug("Velocity scale %.4f over %d timing matches", scale, len(timing_pairs))
        admissible &= _within(ref_vel[:, None] - scale * est_vel[None, :], cfg.velocity_tolerance)

    pairs = maximum_matching(admissible)
    return EvalResult.from_counts(len(pairs), len(ref), len(est), pairs, cfg.empty_score)


def match_pedals(ref: Sequence[PedalEvent], est: Sequence[PedalEvent], cfg: MatchConfig = MatchConfig()) -> EvalResult:
    if not ref or not est:
        return EvalResult.from_counts(0, len(ref), len(est), empty_score=cfg.empty_score)

    admissible = _timing_admissible(
        np.array([p.onset_seconds for p in ref]),
        np.array([p.offset_seconds for p in ref]),
        np.array([p.onset_seconds for p in est]),
        np.array([p.offset_seconds for p in est]),
        cfg,
    )
    pairs = maximum_matching(admissible)
    return EvalResult.from_counts(len(pairs), len(ref), len(est), pairs, cfg.empty_score)


def frame_metrics(ref_roll, est_roll, empty_score: float = 1.0) -> EvalResult:
    """Precision/recall/F1 over the flattened cells of two binary rolls."""
    ref = ref_roll.values if isinstance(ref_roll, RegressionGrid) else np.asarray(ref_roll)
    est = est_roll.values if isinstance(est_roll, RegressionGrid) else np.asarray(est_roll)
    if ref.shape != est.shape:
        raise ValidationError(f"Rolls have different shapes: {ref.shape} vs {est.shape}")
    ref_on = ref > 0.5
    est_on = est > 0.5
    true_positives = int(np.count_nonzero(ref_on & est_on))
    return EvalResult.from_counts(
        true_positives, int(np.count_nonzero(ref_on)), int(np.count_nonzero(est_on)), empty_score=empty_score
    )


# ---------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------
def tolerance_sweep(
    ref: Sequence,
    est: Sequence,
    tolerances: Sequence[float],
    mode: str = "onset",
    base: MatchConfig = MatchConfig(),
) -> List[Tuple[float, EvalResult]]:
    """Evaluate the same (ref, est) pair across a list of onset or offset tolerances."""
    if mode not in ("onset", "offset"):
        raise ValidationError(f"Sweep mode must be 'onset' or 'offset', got {mode!r}")
    tolerances = [float(t) for t in tolerances]
    if any(t <= 0 for t in tolerances):
        raise ValidationError("Sweep tolerances must be positive")
    if tolerances != sorted(tolerances):
        raise ValidationError("Sweep tolerances must be sorted")

    pedal_mode = any(isinstance(e, PedalEvent) for e in list(ref) + list(est))
    match = match_pedals if pedal_mode else match_notes

    results = []
    for tolerance in tolerances:
        if mode == "onset":
            cfg = replace(base, onset_tolerance_seconds=tolerance, use_offset=False, use_velocity=False)
        else:
            cfg = replace(
                base,
                onset_tolerance_seconds=SWEEP_FIXED_ONSET_TOLERANCE,
                use_offset=True,
                offset_tolerance_seconds=tolerance,
                offset_ratio=0.2,
                use_velocity=False,
            )
        results.append((tolerance, match(ref, est, cfg)))
    return results


def sweep_to_frame(results: Sequence[Tuple[float, EvalResult]]) -> pd.DataFrame:
    return pd.DataFrame(
        [(tolerance, r.precision, r.recall, r.f1) for tolerance, r in results],
        columns=["tolerance", "precision", "recall", "f1"],
    )


# ---------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------
def evaluate_sequences(
    ref: NoteSequence,
    est: NoteSequence,
    hop_seconds: float = 0.01,
    base: MatchConfig = MatchConfig(),
) -> Dict[str, EvalResult]:
    """All metric groups: frame, note, note w/ offset, note w/ offset & velocity, and pedal groups."""
    duration = max(ref.duration_seconds, est.duration_seconds)
    grid = TimeGrid.for_duration(duration, hop_seconds)

    report: Dict[str, EvalResult] = {
        "Frame": frame_metrics(encode_frame_roll(ref, grid), encode_frame_roll(est, grid), base.empty_score),
        "Note": match_notes(ref.notes, est.notes, replace(base, use_offset=False, use_velocity=False)),
        "Note w/ offset": match_notes(ref.notes, est.notes, replace(base, use_offset=True, use_velocity=False)),
        "Note w/ offset & velocity": match_notes(
            ref.notes, est.notes, replace(base, use_offset=True, use_velocity=True)
        ),
    }
    if ref.pedals or est.pedals:
        report["Pedal frame"] = frame_metrics(
            encode_pedal_roll(ref, grid), encode_pedal_roll(est, grid), base.empty_score
        )
        report["Pedal event"] = match_pedals(ref.pedals, est.pedals, replace(base, use_offset=False))
        report["Pedal event w/ offset"] = match_pedals(ref.pedals, est.pedals, replace(base, use_offset=True))
    return report


def report_to_frame(report: Dict[str, EvalResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [(name, r.precision, r.recall, r.f1) for name, r in report.items()],
        columns=["metric", "precision", "recall", "f1"],
    )
