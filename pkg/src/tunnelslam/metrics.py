"""Trajectory evaluation: relative pose error over fixed path-length
segments and absolute pose error against ground truth.

No trajectory-wide alignment is applied before APE: the pipelines here are
anchored at known initial poses, and aligning would mask exactly the drift
being measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose3, pose_error


class TooShort(ValueError):
    """Total ground-truth path length is below the requested segment length."""


@dataclass(frozen=True)
class RpeSample:
    start_index: int
    end_index: int
    segment_length: float       # accumulated ground-truth path length, meters
    translation_error: float    # meters
    rotation_error: float       # radians


def _path_lengths(poses: list[Pose3]) -> np.ndarray:
    steps = [0.0] + [float(np.linalg.norm(b.t - a.t)) for a, b in zip(poses[:-1], poses[1:])]
    return np.cumsum(steps)


def rpe(estimate: list[Pose3], truth: list[Pose3], segment_length: float) -> list[RpeSample]:
    """Relative pose error per start index over ground-truth path segments.

    For each start index the end index is the first whose accumulated
    ground-truth path length exceeds ``segment_length``; the error compares
    the relative motions of estimate and truth over that window.
    """
    if len(estimate) != len(truth):
        raise ValueError(f"length mismatch: {len(estimate)} vs {len(truth)}")
    if segment_length <= 0:
        raise ValueError("segment_length must be positive")
    arc = _path_lengths(truth)
    if arc[-1] < segment_length:
        raise TooShort(f"path length {arc[-1]:.3f} m < segment {segment_length} m")
    out: list[RpeSample] = []
    j = 0
    for i in range(len(truth)):
        j = max(j, i)
        while j < len(truth) and arc[j] - arc[i] <= segment_length:
            j += 1
        if j >= len(truth):
            break
        rel_est = estimate[i].between(estimate[j])
        rel_truth = truth[i].between(truth[j])
        angle, dist = pose_error(rel_truth, rel_est)
        out.append(RpeSample(i, j, float(arc[j] - arc[i]), dist, angle))
    return out


def ape(estimate: list[Pose3], truth: list[Pose3]) -> np.ndarray:
    """Per-index translation error norms (meters); no alignment applied."""
    if len(estimate) != len(truth):
        raise ValueError(f"length mismatch: {len(estimate)} vs {len(truth)}")
    return np.array([pose_error(t, e)[1] for e, t in zip(estimate, truth)])
