"""Multi-scale sliding-window proposal generation.

Window lengths are fixed fractions of the average training-video length.
Each window slides with ~80% overlap between consecutive positions; a
tail window anchored at the video end guarantees the final frames are
covered, and windows longer than the video degrade to the whole video.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import InputError

DEFAULT_SCALE_FRACTIONS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0)
DEFAULT_OVERLAP = 0.8


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero (not banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True, order=True)
class Segment:
    """A temporal interval in frame units, endpoints inclusive."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise InputError(f"invalid segment [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def check_within(self, num_frames: int) -> "Segment":
        if self.end >= num_frames:
            raise InputError(
                f"segment [{self.start}, {self.end}] exceeds video of {num_frames} frames"
            )
        return self


@dataclass
class WindowConfig:
    avg_train_length: float
    scale_fractions: Sequence[float] = DEFAULT_SCALE_FRACTIONS
    overlap: float = DEFAULT_OVERLAP

    def __post_init__(self):
        if self.avg_train_length <= 0:
            raise InputError("avg_train_length must be positive")
        if not all(0 < f <= 1 for f in self.scale_fractions):
            raise InputError("scale fractions must lie in (0, 1]")
        if not 0 <= self.overlap < 1:
            raise InputError("overlap must lie in [0, 1)")


@dataclass
class ProposalSet:
    """Segments sorted by (start, end) with the scale index each came from."""

    segments: list[Segment] = field(default_factory=list)
    scales: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)


def window_lengths(config: WindowConfig) -> list[int]:
    """Frame counts per scale: rounded fraction of the average length,
    floored at 1, deduplicated."""
    lengths: list[int] = []
    for fraction in config.scale_fractions:
        n = max(1, round_half_away(fraction * config.avg_train_length))
        if n not in lengths:
            lengths.append(n)
    return lengths


def generate(num_frames: int, config: WindowConfig) -> ProposalSet:
    """Slide every window scale across a video of ``num_frames`` frames."""
    if num_frames < 1:
        raise InputError("proposal generation needs at least one frame")
    found: dict[Segment, int] = {}
    for scale, length in enumerate(window_lengths(config)):
        if length > num_frames:
            found.setdefault(Segment(0, num_frames - 1), scale)
            continue
        stride = max(1, round_half_away((1.0 - config.overlap) * length))
        start = 0
        while start + length <= num_frames:
            found.setdefault(Segment(start, start + length - 1), scale)
            start += stride
        found.setdefault(Segment(num_frames - length, num_frames - 1), scale)
    ordered = sorted(found)
    return ProposalSet(segments=ordered, scales=[found[s] for s in ordered])
