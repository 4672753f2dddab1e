"""
Thresholded local maxima and analytic sub-frame refinement.

Given three consecutive frames A, B, C around a peak B of a sampled symmetric
triangle, the event time is the axis of symmetry of the triangle through them:

    y_C > y_A:  t = x_B + (x_B - x_A) / 2 * (y_C - y_A) / (y_B - y_A)
    y_A > y_C:  t = x_B - (x_C - x_B) / 2 * (y_A - y_C) / (y_B - y_C)
    y_A = y_C:  t = x_B
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import TimeGrid, frame_center_time
from .errors import ValidationError

_SPACING_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RefinedPeak:
    frame_index: int
    refined_time_seconds: float
    peak_value: float


def find_local_maxima(series, threshold: float) -> List[int]:
    """Indices of thresholded local maxima.

    A plateau counts once, at its first frame; boundary frames compare only
    against their existing neighbour.
    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size == 0:
        return []

    # Collapse runs of equal values so plateaus behave like single samples.
    run_starts = np.flatnonzero(np.r_[True, x[1:] != x[:-1]])
    run_values = x[run_starts]
    higher_than_left = np.r_[True, run_values[1:] > run_values[:-1]]
    higher_than_right = np.r_[run_values[:-1] > run_values[1:], True]
    peaks = run_starts[higher_than_left & higher_than_right & (run_values > threshold)]
    return [int(i) for i in peaks]


def refine_peak(x_a: float, y_a: float, x_b: float, y_b: float, x_c: float, y_c: float) -> float:
    """Refined event time from three equally spaced samples around a peak at B."""
    if not x_a < x_b < x_c:
        raise ValidationError(f"Samples must be ordered: got x_A={x_a}, x_B={x_b}, x_C={x_c}")
    left, right = x_b - x_a, x_c - x_b
    if abs(left - right) > _SPACING_TOLERANCE * max(1.0, abs(left)):
        raise ValidationError(f"Samples must be equally spaced: spacings {left} and {right}")
    if y_b < max(y_a, y_c):
        raise ValidationError(f"B is not a peak: y_A={y_a}, y_B={y_b}, y_C={y_c}")

    if y_c > y_a:
        return x_b + left / 2.0 * (y_c - y_a) / (y_b - y_a)
    if y_a > y_c:
        return x_b - right / 2.0 * (y_a - y_c) / (y_b - y_c)
    # Symmetric or flat triple: no refinement possible.
    return x_b


def detect_and_refine(series, threshold: float, grid: TimeGrid) -> List[RefinedPeak]:
    x = np.asarray(series, dtype=np.float64).ravel()
    if x.size != grid.num_frames:
        raise ValidationError(f"Series has {x.size} frames, grid has {grid.num_frames}")

    peaks = []
    last = grid.num_frames - 1
    for i in find_local_maxima(x, threshold):
        if 0 < i < last:
            t = refine_peak(
                frame_center_time(grid, i - 1), x[i - 1],
                frame_center_time(grid, i), x[i],
                frame_center_time(grid, i + 1), x[i + 1],
            )
        else:
            t = frame_center_time(grid, i)
        peaks.append(RefinedPeak(frame_index=i, refined_time_seconds=t, peak_value=float(x[i])))
    return peaks
