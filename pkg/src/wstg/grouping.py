"""Grouping of fine-stage frame scores into the final segment.

Scores are min-max normalized to [0, 1], candidate segments are the
maximal runs of frames at or above each threshold in a fixed sweep, and
the candidate with the largest summed score wins.  A degenerate score
profile (all frames equal) or an empty candidate set falls back to the
coarse result so the fine stage never returns nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InputError
from .proposals import Segment

DEFAULT_THRESHOLDS = tuple(i / 20 for i in range(1, 20))  # 0.05 .. 0.95


@dataclass
class NormalizedScores:
    """Per-frame values in [0, 1]; ``degenerate`` marks an all-equal input."""

    values: np.ndarray
    degenerate: bool


def normalize(scores: np.ndarray) -> NormalizedScores:
    """Min-max rescale to [0, 1]; an all-equal input maps to 0.5 everywhere."""
    flat = np.asarray(scores, dtype=np.float64).reshape(-1)
    if flat.size == 0:
        raise EmptyInputError("cannot normalize an empty score sequence")
    lo, hi = flat.min(), flat.max()
    if hi == lo:
        return NormalizedScores(values=np.full(flat.shape, 0.5), degenerate=True)
    return NormalizedScores(values=(flat - lo) / (hi - lo), degenerate=False)


def _runs_at_or_above(values: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    start = None
    for i, v in enumerate(values):
        if v >= threshold:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(values) - 1))
    return runs


def watershed_candidates(
    scores: NormalizedScores, thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> list[Segment]:
    """Maximal runs of frames scoring at or above each threshold,
    deduplicated over the sweep and sorted by (start, end)."""
    if len(thresholds) == 0:
        raise InputError("threshold sweep must be nonempty")
    if not all(0 < t < 1 for t in thresholds):
        raise InputError("thresholds must lie strictly inside (0, 1)")
    found: set[tuple[int, int]] = set()
    for threshold in thresholds:
        found.update(_runs_at_or_above(scores.values, threshold))
    return [Segment(a, b) for a, b in sorted(found)]


def aggregate_and_select(
    candidates: Sequence[Segment],
    scores: NormalizedScores,
    fallback: Segment,
    offset: int = 0,
) -> Segment:
    """Candidate with the largest summed normalized score, shifted by
    ``offset`` into absolute frame indices.

    Ties prefer the earlier start, then the shorter segment.  With no
    candidates, or when normalization was degenerate, the fallback (an
    absolute segment) is returned unchanged.
    """
    if not candidates or scores.degenerate:
        return fallback
    best = None
    best_key = None
    for seg in candidates:
        mass = float(scores.values[seg.start : seg.end + 1].sum())
        key = (-mass, seg.start, seg.length)
        if best_key is None or key < best_key:
            best, best_key = seg, key
    assert best is not None
    return Segment(best.start + offset, best.end + offset)
