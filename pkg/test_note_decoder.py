#!/usr/bin/env python3
"""
Pruebas del decodificador de notas (onsets, offsets, truncado y velocidad).
"""

import os
import sys

import numpy as np
import pytest

# Añadir el directorio src al path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from hrtranscribe.core import NoteEvent, RegressionGrid, Thresholds, TimeGrid
from hrtranscribe.errors import ValidationError
from hrtranscribe.midi_io import NoteSequence
from hrtranscribe.note_decoder import NoteGridBundle, decode_notes, velocity_from_probability
from hrtranscribe.target_encoder import encode_note_targets, encode_regression_track

GRID = TimeGrid(0.01, 301)


def _bundle(frame=None, onset=None, offset=None, velocity=None, grid=GRID):
    def full(columns):
        values = np.zeros((grid.num_frames, grid.num_keys))
        for key, column in (columns or {}).items():
            values[:, key] = column
        return RegressionGrid(grid, values)

    return NoteGridBundle(full(frame), full(onset), full(offset), full(velocity))


def _decode(seq, grid=GRID, thresholds=Thresholds()):
    return decode_notes(encode_note_targets(seq, grid).as_bundle(), thresholds)


def test_single_note_roundtrip():
    notes = _decode(NoteSequence.build([NoteEvent(60, 1.0, 1.5, 100)]))
    assert len(notes) == 1
    note = notes[0]
    assert note.pitch == 60
    assert note.onset_seconds == pytest.approx(1.0, abs=1e-9)
    assert note.offset_seconds == pytest.approx(1.5, abs=1e-9)
    assert abs(note.velocity - 100) <= 1


def test_all_zero_grids_decode_to_nothing():
    assert decode_notes(_bundle()) == []


def test_next_onset_truncates_previous_note():
    seq = NoteSequence.build([NoteEvent(60, 1.0, 1.5, 80), NoteEvent(60, 1.3, 1.8, 80)])
    notes = _decode(seq)
    assert len(notes) == 2
    assert notes[0].offset_seconds == pytest.approx(1.3, abs=1e-9)
    assert notes[0].offset_seconds <= notes[1].onset_seconds


def test_frame_drop_ends_note_without_offset_peak():
    frame = np.zeros(301)
    frame[100:105] = 1.0
    bundle = _bundle(
        frame={39: frame},
        onset={39: encode_regression_track([1.0], GRID.with_keys(1))},
        velocity={39: np.where(np.arange(301) == 100, 0.5, 0.0)},
    )
    notes = decode_notes(bundle)
    assert [(n.pitch, n.onset_seconds, n.offset_seconds, n.velocity) for n in notes] == [
        (60, pytest.approx(1.0), pytest.approx(1.05), 64)
    ]


def test_note_without_offset_closes_at_clip_end():
    frame = np.zeros(301)
    frame[250:] = 1.0
    bundle = _bundle(frame={0: frame}, onset={0: encode_regression_track([2.5], GRID.with_keys(1))})
    notes = decode_notes(bundle)
    assert len(notes) == 1
    assert notes[0].pitch == 21
    assert notes[0].offset_seconds == pytest.approx(3.0)
    # Velocidad 0 en el grid: se sujeta al mínimo escribible
    assert notes[0].velocity == 1


def test_offset_peak_before_onset_is_ignored():
    frame = np.zeros(301)
    frame[100:200] = 1.0
    bundle = _bundle(
        frame={10: frame},
        onset={10: encode_regression_track([1.0], GRID.with_keys(1))},
        offset={10: encode_regression_track([0.5, 1.62], GRID.with_keys(1))},
    )
    notes = decode_notes(bundle)
    assert [round(n.offset_seconds, 9) for n in notes] == [1.62]


def test_keys_are_independent_and_sorted():
    seq = NoteSequence.build([
        NoteEvent(30, 0.5, 0.9, 40),
        NoteEvent(90, 0.5, 1.2, 70),
        NoteEvent(60, 0.2, 2.0, 100),
    ])
    notes = _decode(seq)
    assert [n.pitch for n in notes] == [60, 30, 90]
    single = [_decode(NoteSequence.build([n]))[0] for n in seq.notes]
    assert sorted(single, key=lambda n: n.sort_key) == notes


def test_raising_onset_threshold_never_adds_notes():
    rng = np.random.default_rng(4)
    values = rng.uniform(0, 1, size=(301, 88))
    grid = RegressionGrid(GRID, values)
    bundle = NoteGridBundle(grid, grid, grid, grid)
    previous = None
    for threshold in (0.1, 0.3, 0.5, 0.7, 0.9):
        onsets = {(n.pitch, n.onset_seconds) for n in decode_notes(bundle, Thresholds().with_overrides(onset=threshold))}
        if previous is not None:
            assert onsets <= previous
        previous = onsets


def test_same_pitch_notes_never_overlap():
    rng = np.random.default_rng(8)
    values = rng.uniform(0, 1, size=(301, 88))
    grid = RegressionGrid(GRID, values)
    notes = decode_notes(NoteGridBundle(grid, grid, grid, grid))
    by_pitch = {}
    for note in notes:
        by_pitch.setdefault(note.pitch, []).append(note)
    for pitch_notes in by_pitch.values():
        for a, b in zip(pitch_notes, pitch_notes[1:]):
            assert a.offset_seconds <= b.onset_seconds


def test_bundle_validation():
    with pytest.raises(ValidationError):
        z = RegressionGrid.zeros(GRID.with_keys(1))
        NoteGridBundle(z, z, z, z)
    a = RegressionGrid.zeros(GRID)
    b = RegressionGrid.zeros(TimeGrid(0.02, 301))
    with pytest.raises(ValidationError):
        NoteGridBundle(a, a, a, b)


def test_velocity_rescaling():
    assert velocity_from_probability(1.0) == 127
    assert velocity_from_probability(0.0) == 1
    assert velocity_from_probability(0.5) == 64
    assert velocity_from_probability(100 / 127) == 101


def main():
    """Ejecuta todas las pruebas."""
    print("🚀 Pruebas de note_decoder")
    print("=" * 60)
    tests = [
        test_single_note_roundtrip,
        test_all_zero_grids_decode_to_nothing,
        test_next_onset_truncates_previous_note,
        test_frame_drop_ends_note_without_offset_peak,
        test_note_without_offset_closes_at_clip_end,
        test_offset_peak_before_onset_is_ignored,
        test_keys_are_independent_and_sorted,
        test_raising_onset_threshold_never_adds_notes,
        test_same_pitch_notes_never_overlap,
        test_bundle_validation,
        test_velocity_rescaling,
    ]
    for test in tests:
        test()
        print(f"  ✅ {test.__name__}")
    print("🎉 Pruebas completadas!")


if __name__ == "__main__":
    main()
