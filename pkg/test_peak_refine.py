#!/usr/bin/env python3
"""
Pruebas de máximos locales y del refinamiento sub-frame de picos.
"""

import os
import sys
import time

import numpy as np
import pytest

# Añadir el directorio src al path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from hrtranscribe.core import TimeGrid
from hrtranscribe.errors import ValidationError
from hrtranscribe.peak_refine import detect_and_refine, find_local_maxima, refine_peak
from hrtranscribe.target_encoder import encode_regression_track

GRID = TimeGrid(0.01, 1001, num_keys=1)


def symmetry_axis_oracle(xs, ys, step=1e-5):
    """Eje de simetría por barrido denso: el triángulo simétrico que mejor ajusta los tres puntos."""
    candidates = np.arange(xs[0], xs[2] + step / 2, step)
    distance = np.abs(np.asarray(xs)[None, :] - candidates[:, None])
    y = np.asarray(ys) - np.mean(ys)
    centred = distance - distance.mean(axis=1, keepdims=True)
    slope = (centred @ y) / np.einsum("ij,ij->i", centred, centred)
    residual = np.sum((y[None, :] - slope[:, None] * centred) ** 2, axis=1)
    return candidates[np.argmin(residual)]


def test_local_maxima_examples():
    assert find_local_maxima([0.1, 0.9, 0.1], 0.3) == [1]
    assert find_local_maxima([0.5, 0.5, 0.1], 0.3) == [0]
    assert find_local_maxima([0.1, 0.2, 0.2, 0.2, 0.1], 0.1) == [1]
    assert find_local_maxima([0.1, 0.2, 0.1], 0.3) == []
    assert find_local_maxima([0.9], 0.3) == [0]
    assert find_local_maxima([], 0.3) == []


def test_encoded_triangle_has_one_maximum():
    column = encode_regression_track([1.234], GRID, j=5)
    assert find_local_maxima(column, 0.3) == [123]


def test_refine_peak_hand_example():
    assert refine_peak(0.0, 0.2, 0.01, 1.0, 0.02, 0.6) == pytest.approx(0.0125)


def test_refine_peak_symmetric_and_flat():
    assert refine_peak(0.0, 0.4, 0.01, 0.9, 0.02, 0.4) == 0.01
    assert refine_peak(0.0, 0.5, 0.01, 0.5, 0.02, 0.5) == 0.01


def test_refine_peak_preconditions():
    with pytest.raises(ValidationError):
        refine_peak(0.02, 0.2, 0.01, 1.0, 0.0, 0.6)
    with pytest.raises(ValidationError):
        refine_peak(0.0, 0.2, 0.01, 1.0, 0.03, 0.6)
    with pytest.raises(ValidationError):
        refine_peak(0.0, 0.2, 0.01, 0.5, 0.02, 0.6)


def test_refinement_is_offset_invariant():
    a = refine_peak(0.0, 0.2, 0.01, 1.0, 0.02, 0.6)
    b = refine_peak(0.0, 0.2 - 0.15, 0.01, 1.0 - 0.15, 0.02, 0.6 - 0.15)
    assert a == pytest.approx(b, abs=1e-12)


def test_exact_inversion_for_1000_onsets():
    rng = np.random.default_rng(42)
    onsets = rng.uniform(0.1, 9.9, size=1000)
    tracks = [encode_regression_track([t0], GRID, j=5) for t0 in onsets]
    start = time.perf_counter()
    refined = [detect_and_refine(track, 0.3, GRID) for track in tracks]
    assert time.perf_counter() - start < 1.0
    for t0, peaks in zip(onsets, refined):
        assert len(peaks) == 1
        assert abs(peaks[0].refined_time_seconds - t0) < 1e-9


def test_exact_inversion_for_every_j():
    rng = np.random.default_rng(11)
    for j in (2, 3, 5, 10, 20):
        threshold = (1 - 1 / (2 * j)) / 2
        for t0 in rng.uniform(0.5, 9.5, size=50):
            peaks = detect_and_refine(encode_regression_track([t0], GRID, j=j), threshold, GRID)
            assert len(peaks) == 1
            assert abs(peaks[0].refined_time_seconds - t0) < 1e-9


def test_refine_peak_matches_dense_scan_oracle():
    rng = np.random.default_rng(7)
    hop = 0.01
    for _ in range(1000):
        j = int(rng.integers(2, 11))
        x_b = float(rng.integers(10, 990)) * hop
        t0 = x_b + rng.uniform(-hop / 2, hop / 2)
        xs = [x_b - hop, x_b, x_b + hop]
        lift = rng.uniform(0.0, 0.3)
        ys = [1.0 - abs(x - t0) / (j * hop) - lift for x in xs]
        refined = refine_peak(xs[0], ys[0], xs[1], ys[1], xs[2], ys[2])
        assert abs(refined - symmetry_axis_oracle(xs, ys)) <= 2e-5
        assert abs(refined - x_b) <= hop / 2 + 1e-12


def test_detect_and_refine_edges():
    assert detect_and_refine(np.full(1001, 0.1), 0.3, GRID) == []
    series = np.zeros(1001)
    series[0] = 0.9
    series[1] = 0.5
    peaks = detect_and_refine(series, 0.3, GRID)
    assert [(p.frame_index, p.refined_time_seconds) for p in peaks] == [(0, 0.0)]
    with pytest.raises(ValidationError):
        detect_and_refine(np.zeros(10), 0.3, GRID)


def test_two_triangles_ten_frames_apart():
    peaks = detect_and_refine(encode_regression_track([2.003, 2.103], GRID, j=5), 0.3, GRID)
    assert [p.frame_index for p in peaks] == [200, 210]
    assert peaks[0].refined_time_seconds == pytest.approx(2.003, abs=1e-9)
    assert peaks[1].refined_time_seconds == pytest.approx(2.103, abs=1e-9)


def main():
    """Ejecuta todas las pruebas."""
    print("🚀 Pruebas de peak_refine")
    print("=" * 60)
    tests = [
        test_local_maxima_examples,
        test_encoded_triangle_has_one_maximum,
        test_refine_peak_hand_example,
        test_refine_peak_symmetric_and_flat,
        test_refine_peak_preconditions,
        test_refinement_is_offset_invariant,
        test_exact_inversion_for_1000_onsets,
        test_exact_inversion_for_every_j,
        test_refine_peak_matches_dense_scan_oracle,
        test_detect_and_refine_edges,
        test_two_triangles_ten_frames_apart,
    ]
    for test in tests:
        test()
        print(f"  ✅ {test.__name__}")
    print("🎉 Pruebas completadas!")


if __name__ == "__main__":
    main()
