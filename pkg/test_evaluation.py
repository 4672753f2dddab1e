#!/usr/bin/env python3
"""
Pruebas del emparejamiento de notas/pedales, métricas de frames y barridos de tolerancia.
"""

import os
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

# Añadir el directorio src al path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from hrtranscribe.core import NoteEvent, PedalEvent
from hrtranscribe.errors import ValidationError
from hrtranscribe.evaluation import (
    OFFSET_SWEEP_TOLERANCES,
    ONSET_SWEEP_TOLERANCES,
    EvalResult,
    MatchConfig,
    evaluate_sequences,
    frame_metrics,
    match_notes,
    match_pedals,
    sweep_to_frame,
    tolerance_sweep,
)
from hrtranscribe.midi_io import NoteSequence


def _notes(*rows):
    return [NoteEvent(p, on, off, v) for p, on, off, v in rows]


def _random_notes(rng, count, pitches=(60, 61, 62)):
    notes = []
    for _ in range(count):
        onset = float(rng.uniform(0.0, 0.3))
        notes.append(NoteEvent(int(rng.choice(pitches)), onset, onset + float(rng.uniform(0.05, 0.5)), int(rng.integers(1, 128))))
    return notes


def brute_force_matching_size(admissible):
    rows, cols = admissible.shape

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == rows:
            return 0
        result = best(i + 1, used)
        for j in range(cols):
            if admissible[i, j] and not used & (1 << j):
                result = max(result, 1 + best(i + 1, used | (1 << j)))
        return result

    return best(0, 0)


def test_identical_lists_score_one_under_every_config():
    ref = _notes((60, 0.5, 1.0, 80), (64, 0.5, 0.8, 70), (60, 1.2, 1.9, 90))
    for cfg in (MatchConfig.onset_only(), MatchConfig.with_offset(), MatchConfig.with_offset_velocity()):
        result = match_notes(ref, ref, cfg)
        assert (result.precision, result.recall, result.f1) == (1.0, 1.0, 1.0)
        assert len(result.matched_pairs) == 3


def test_one_spurious_note():
    ref = _notes(*[(60 + i, 0.5 * i, 0.5 * i + 0.3, 80) for i in range(9)])
    est = ref + _notes((100, 2.0, 2.5, 80))
    result = match_notes(ref, est)
    assert result.precision == pytest.approx(9 / 10)
    assert result.recall == 1.0


def test_onset_tolerance_boundary():
    ref = _notes((60, 1.0, 1.5, 80))
    shifted = _notes((60, 1.008, 1.508, 80))
    assert match_notes(ref, shifted, MatchConfig(onset_tolerance_seconds=0.005)).f1 == 0.0
    assert match_notes(ref, shifted, MatchConfig(onset_tolerance_seconds=0.01)).f1 == 1.0
    # Una diferencia exactamente igual a la tolerancia se admite
    exact = _notes((60, 1.05, 1.5, 80))
    assert match_notes(ref, exact).f1 == 1.0


def test_pitch_must_match():
    assert match_notes(_notes((60, 1.0, 1.5, 80)), _notes((61, 1.0, 1.5, 80))).f1 == 0.0


def test_offset_window_uses_ratio_of_reference_duration():
    ref = _notes((60, 0.0, 1.0, 80))
    late = _notes((60, 0.0, 1.15, 80))
    assert match_notes(ref, late, MatchConfig.with_offset()).f1 == 1.0
    later = _notes((60, 0.0, 1.25, 80))
    assert match_notes(ref, later, MatchConfig.with_offset()).f1 == 0.0
    short = _notes((60, 0.0, 0.1, 80))
    assert match_notes(short, _notes((60, 0.0, 0.16, 80)), MatchConfig.with_offset()).f1 == 0.0
    assert match_notes(short, _notes((60, 0.0, 0.15, 80)), MatchConfig.with_offset()).f1 == 1.0


def test_velocity_scale_is_fitted_globally():
    ref = _notes((60, 0.0, 0.5, 100), (62, 0.0, 0.5, 80), (64, 0.0, 0.5, 60))
    half = _notes((60, 0.0, 0.5, 50), (62, 0.0, 0.5, 40), (64, 0.0, 0.5, 30))
    assert match_notes(ref, half, MatchConfig.with_offset_velocity()).f1 == 1.0

    wrong = _notes((60, 0.0, 0.5, 100), (62, 0.0, 0.5, 80), (64, 0.0, 0.5, 127))
    result = match_notes(ref, wrong, MatchConfig.with_offset_velocity())
    assert result.recall < 1.0
    assert match_notes(ref, wrong, MatchConfig.with_offset()).f1 == 1.0


def test_empty_conventions():
    notes = _notes((60, 0.0, 0.5, 100))
    both_empty = match_notes([], [])
    assert (both_empty.precision, both_empty.recall, both_empty.f1) == (1.0, 1.0, 1.0)
    assert match_notes([], [], MatchConfig(empty_score=0.0)).f1 == 0.0
    no_estimate = match_notes(notes, [])
    assert (no_estimate.precision, no_estimate.recall, no_estimate.f1) == (0.0, 0.0, 0.0)
    no_reference = match_notes([], notes)
    assert (no_reference.precision, no_reference.recall) == (0.0, 0.0)


def test_swapping_roles_swaps_precision_and_recall():
    rng = np.random.default_rng(21)
    for _ in range(50):
        ref = _random_notes(rng, int(rng.integers(1, 8)))
        est = _random_notes(rng, int(rng.integers(1, 8)))
        a = match_notes(ref, est)
        b = match_notes(est, ref)
        assert a.precision == pytest.approx(b.recall)
        assert a.recall == pytest.approx(b.precision)


def test_matching_is_maximum_against_brute_force():
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    cfg = MatchConfig(onset_tolerance_seconds=0.05)
    for _ in range(500):
        ref = _random_notes(rng, int(rng.integers(0, 9)))
        est = _random_notes(rng, int(rng.integers(0, 9)))
        admissible = np.array(
            [[r.pitch == e.pitch and abs(r.onset_seconds - e.onset_seconds) <= 0.05 for e in est] for r in ref],
            dtype=bool,
        ).reshape(len(ref), len(est))
        result = match_notes(ref, est, cfg)
        assert len(result.matched_pairs) == brute_force_matching_size(admissible)
        refs = [r for r, _ in result.matched_pairs]
        ests = [e for _, e in result.matched_pairs]
        assert len(set(refs)) == len(refs) and len(set(ests)) == len(ests)
        assert all(admissible[r, e] for r, e in result.matched_pairs)
    assert time.perf_counter() - start < 30.0


def test_frame_metrics():
    ref = np.array([[1, 0], [1, 1], [0, 0]])
    est = np.array([[1, 0], [0, 1], [1, 0]])
    result = frame_metrics(ref, est)
    assert result.precision == pytest.approx(2 / 3)
    assert result.recall == pytest.approx(2 / 3)
    assert frame_metrics(np.zeros((3, 2)), np.zeros((3, 2))).f1 == 1.0
    with pytest.raises(ValidationError):
        frame_metrics(np.zeros((3, 2)), np.zeros((2, 3)))


def test_pedal_matching():
    ref = [PedalEvent(1.0, 2.0), PedalEvent(3.0, 4.0)]
    est = [PedalEvent(1.02, 2.01), PedalEvent(3.2, 4.0)]
    assert match_pedals(ref, est).f1 == pytest.approx(0.5)
    assert match_pedals(ref, est, MatchConfig(onset_tolerance_seconds=0.25)).f1 == 1.0


def test_sweeps_are_monotone():
    rng = np.random.default_rng(5)
    for _ in range(30):
        ref = _random_notes(rng, 8)
        est = [
            NoteEvent(n.pitch, n.onset_seconds + float(rng.uniform(0, 0.08)), n.offset_seconds + float(rng.uniform(0, 0.6)), n.velocity)
            for n in ref
        ]
        for mode, grid in (("onset", ONSET_SWEEP_TOLERANCES), ("offset", OFFSET_SWEEP_TOLERANCES)):
            f1 = [r.f1 for _, r in tolerance_sweep(ref, est, grid, mode)]
            assert all(a <= b + 1e-12 for a, b in zip(f1, f1[1:]))


def test_uniform_shift_sweep():
    ref = _notes(*[(60 + i, 0.3 * i, 0.3 * i + 0.2, 80) for i in range(10)])
    est = [NoteEvent(n.pitch, n.onset_seconds + 0.008, n.offset_seconds + 0.008, n.velocity) for n in ref]
    results = dict(tolerance_sweep(ref, est, [0.005, 0.01], "onset"))
    assert results[0.005].f1 == 0.0
    assert results[0.01].f1 == 1.0


def test_sweep_validation_and_table():
    ref = _notes((60, 0.0, 0.5, 100))
    with pytest.raises(ValidationError):
        tolerance_sweep(ref, ref, [0.01], "velocity")
    with pytest.raises(ValidationError):
        tolerance_sweep(ref, ref, [0.05, 0.01], "onset")
    frame = sweep_to_frame(tolerance_sweep(ref, ref, [0.01, 0.05], "onset"))
    assert list(frame.columns) == ["tolerance", "precision", "recall", "f1"]
    assert frame["f1"].tolist() == [1.0, 1.0]


def test_result_line_format():
    line = EvalResult(0.5, 1.0, 2 / 3).as_line("Note")
    assert line == "Note: P=50.00% R=100.00% F1=66.67%"


def test_evaluate_sequences_groups():
    seq = NoteSequence.build(_notes((60, 0.5, 1.0, 80), (67, 0.7, 1.4, 60)), [PedalEvent(0.4, 1.2)])
    report = evaluate_sequences(seq, seq)
    assert list(report) == [
        "Frame", "Note", "Note w/ offset", "Note w/ offset & velocity",
        "Pedal frame", "Pedal event", "Pedal event w/ offset",
    ]
    assert all(r.f1 == 1.0 for r in report.values())
    no_pedals = NoteSequence.build(seq.notes)
    assert "Pedal event" not in evaluate_sequences(no_pedals, no_pedals)


def main():
    """Ejecuta todas las pruebas."""
    print("🚀 Pruebas de evaluation")
    print("=" * 60)
    tests = [
        test_identical_lists_score_one_under_every_config,
        test_one_spurious_note,
        test_onset_tolerance_boundary,
        test_pitch_must_match,
        test_offset_window_uses_ratio_of_reference_duration,
        test_velocity_scale_is_fitted_globally,
        test_empty_conventions,
        test_swapping_roles_swaps_precision_and_recall,
        test_matching_is_maximum_against_brute_force,
        test_frame_metrics,
        test_pedal_matching,
        test_sweeps_are_monotone,
        test_uniform_shift_sweep,
        test_sweep_validation_and_table,
        test_result_line_format,
        test_evaluate_sequences_groups,
    ]
    for test in tests:
        test()
        print(f"  ✅ {test.__name__}")
    print("🎉 Pruebas completadas!")


if __name__ == "__main__":
    main()
