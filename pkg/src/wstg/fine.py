"""Fine stage: boundary expansion, per-frame matching scores, the
video-sentence score, and the hinge ranking loss.

The coarse result is widened by a fixed multiple of its own length so the
refinement can both shrink and grow the boundary.  Each frame inside the
widened window is mapped, fused with the sentence feature using the same
interaction pattern as the coarse stage (without gating), and scored by a
single affine head to an unbounded real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coarse import fuse
from .encoders import EncodedVideo
from .errors import InputError
from .layers import Affine
from .proposals import Segment, round_half_away


@dataclass(frozen=True)
class ExpandedWindow:
    """Widened segment, its coarse source, and the rate that widened it."""

    window: Segment
    source: Segment
    expand_rate: float


@dataclass
class FrameScores:
    """Raw per-frame scores (length-of-window, 1) aligned to the window."""

    values: Tensor
    window: ExpandedWindow

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class FineHead:
    frame_map: Affine   # 2H -> H
    sent_map: Affine    # 2H -> H
    fuse_map: Affine    # 2H -> H
    score_head: Affine  # 3H -> 1


def expand(coarse: Segment, rate: float, num_frames: int) -> ExpandedWindow:
    """Widen ``coarse`` by ``rate`` times its length on both sides, clamped
    to the video."""
    if rate < 0:
        raise InputError(f"expansion rate must be nonnegative, got {rate}")
    coarse.check_within(num_frames)
    margin = round_half_away(rate * coarse.length)
    window = Segment(max(coarse.start - margin, 0), min(coarse.end + margin, num_frames - 1))
    return ExpandedWindow(window=window, source=coarse, expand_rate=rate)


def frame_scores(
    encoded: EncodedVideo,
    sentence_vec: Tensor,
    window: ExpandedWindow,
    head: FineHead,
) -> FrameScores:
    """Score every frame of the expanded window against the sentence."""
    window.window.check_within(encoded.num_frames)
    seg = window.window
    rows = ad.slice_rows(encoded.hidden, seg.start, seg.end + 1)
    f_frames = head.frame_map(rows)
    f_sentence = ad.repeat_rows(head.sent_map(sentence_vec), seg.length)
    fused = fuse(f_frames, f_sentence, head.fuse_map)
    return FrameScores(values=head.score_head(fused), window=window)


def video_sentence_score(scores: FrameScores) -> Tensor:
    """Best frame score: the video-sentence matching scalar (1, 1)."""
    return ad.max_over_axis(scores.values, axis=0)


def fine_loss(pos: Tensor, neg_sentence: Tensor, neg_video: Tensor, margin: float) -> Tensor:
    """Two-sided hinge: both negatives must trail the positive by ``margin``."""
    if margin <= 0:
        raise InputError(f"margin must be positive, got {margin}")
    video_term = ad.relu(ad.add_const(ad.sub(neg_video, pos), margin))
    sentence_term = ad.relu(ad.add_const(ad.sub(neg_sentence, pos), margin))
    return ad.add(video_term, sentence_term)
