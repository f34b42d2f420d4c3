"""Coarse stage: proposal features, gated cross-modal fusion, the
two-stream grounder, the MIL loss, and best-proposal selection.

A proposal feature is built by affine-mapping every frame state and
max-pooling the mapped rows inside the proposal.  Proposal and sentence
features gate each other, are fused into a ``(sum || product || affine)``
interaction vector, and scored by two heads: a classification head
normalized per proposal over the two classes, and a selection head
normalized per class across proposals.  Their elementwise product is the
matching score pair (mismatch, match) per proposal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EncodedVideo
from .errors import EmptyInputError, InputError
from .layers import Affine
from .proposals import ProposalSet, Segment

LOG_EPSILON = 1e-8


@dataclass
class GateParams:
    """Affine maps from the concatenated (proposal || sentence) feature to
    one multiplicative gate per modality."""

    video: Affine
    sentence: Affine


@dataclass
class CoarseHead:
    frame_map: Affine   # 2H -> H, applied before pooling
    sent_map: Affine    # 2H -> H
    gates: GateParams   # 2H -> H each
    fuse_map: Affine    # 2H -> H (third fusion block)
    cls_head: Affine    # 3H -> 2
    slc_head: Affine    # 3H -> 2


@dataclass
class CoarseResult:
    best: Segment
    scores: np.ndarray  # (K, 2)
    m_sum: np.ndarray   # (2,)
    m_max: np.ndarray   # (2,)


def proposal_feature(encoded: EncodedVideo, segment: Segment, frame_map: Affine) -> Tensor:
    """Affine-map the frame states, then max-pool rows inside ``segment``."""
    segment.check_within(encoded.num_frames)
    mapped = frame_map(encoded.hidden)
    return pool_mapped(mapped, segment)


def pool_mapped(mapped: Tensor, segment: Segment) -> Tensor:
    """Max-pool already-mapped frame rows over an inclusive segment."""
    segment.check_within(mapped.shape[0])
    return ad.max_over_axis(ad.slice_rows(mapped, segment.start, segment.end + 1), axis=0)


def gate_pair(f_video: Tensor, f_sentence: Tensor, gates: GateParams) -> tuple[Tensor, Tensor]:
    """Gate each modality by a sigmoid of the joint feature (rows align)."""
    joint = ad.concat([f_video, f_sentence], axis=1)
    gated_video = ad.mul(f_video, ad.sigmoid(gates.video(joint)))
    gated_sentence = ad.mul(f_sentence, ad.sigmoid(gates.sentence(joint)))
    return gated_video, gated_sentence


def fuse(gated_video: Tensor, gated_sentence: Tensor, fuse_map: Affine) -> Tensor:
    """Interaction feature: (v + s) || (v * s) || affine(v || s), width 3H."""
    joint = ad.concat([gated_video, gated_sentence], axis=1)
    return ad.concat(
        [ad.add(gated_video, gated_sentence),
         ad.mul(gated_video, gated_sentence),
         fuse_map(joint)],
        axis=1,
    )


def two_stream_scores(fused: Tensor, cls_head: Affine, slc_head: Affine) -> Tensor:
    """Score pairs (K, 2): per-proposal class softmax times across-proposal
    selection softmax."""
    if fused.shape[0] < 1:
        raise EmptyInputError("two_stream_scores needs at least one proposal")
    m_cls = ad.softmax_axis(cls_head(fused), axis=1)
    m_slc = ad.softmax_axis(slc_head(fused), axis=0)
    return ad.mul(m_cls, m_slc)


def pooled_proposal_features(
    encoded: EncodedVideo, proposals: ProposalSet, head: CoarseHead
) -> Tensor:
    """Stack the pooled feature of every proposal into a (K, H) matrix.

    This depends only on the video, so it can be shared across the
    sentences scored against it.
    """
    if len(proposals) == 0:
        raise EmptyInputError("no proposals to score")
    mapped = head.frame_map(encoded.hidden)
    pooled = [pool_mapped(mapped, seg) for seg in proposals]
    return pooled[0] if len(pooled) == 1 else ad.concat(pooled, axis=0)


def score_pooled(f_video: Tensor, sentence_vec: Tensor, head: CoarseHead) -> Tensor:
    """Score pooled proposal features (K, H) against one sentence."""
    f_sentence = ad.repeat_rows(head.sent_map(sentence_vec), f_video.shape[0])
    gated_v, gated_s = gate_pair(f_video, f_sentence, head.gates)
    fused = fuse(gated_v, gated_s, head.fuse_map)
    return two_stream_scores(fused, head.cls_head, head.slc_head)


def score_proposals(
    encoded: EncodedVideo,
    sentence_vec: Tensor,
    proposals: ProposalSet,
    head: CoarseHead,
) -> Tensor:
    """Full coarse pipeline for one (video, sentence) pair: (K, 2) scores."""
    return score_pooled(pooled_proposal_features(encoded, proposals, head), sentence_vec, head)


def coarse_loss(scores: Tensor, label: Sequence[float]) -> Tensor:
    """MIL cross-entropy over the summed and best score pairs.

    ``label`` is the one-hot pair target: (0, 1) for an aligned pair,
    (1, 0) for a misaligned one.  Scores are summed across proposals and
    the pair of the proposal with the largest match entry is added; the
    negative log of both is taken on the labelled class, clamped by a
    small epsilon.
    """
    lab = np.asarray(label, dtype=np.float64)
    if lab.shape != (2,) or sorted(lab.tolist()) != [0.0, 1.0]:
        raise InputError(f"label must be one-hot over two classes, got {label}")
    target = int(lab.argmax())
    m_sum = ad.sum_over_axis(scores, axis=0)
    best_row = int(scores.data[:, 1].argmax())
    m_max = ad.slice_rows(scores, best_row, best_row + 1)
    picked_sum = ad.slice_cols(m_sum, target, target + 1)
    picked_max = ad.slice_cols(m_max, target, target + 1)
    log_terms = ad.add(
        ad.log(ad.add_const(picked_sum, LOG_EPSILON)),
        ad.log(ad.add_const(picked_max, LOG_EPSILON)),
    )
    return ad.mul_const(log_terms, -1.0)


def select_best(scores: np.ndarray, proposals: ProposalSet) -> Segment:
    """Proposal with the highest match score; ties go to the earliest
    start, then the shortest segment."""
    if len(proposals) == 0:
        raise EmptyInputError("select_best over an empty proposal set")
    if scores.shape != (len(proposals), 2):
        raise InputError(f"scores shape {scores.shape} does not match {len(proposals)} proposals")
    best = 0
    for k in range(1, len(proposals)):
        seg, cur = proposals.segments[k], proposals.segments[best]
        if scores[k, 1] > scores[best, 1] or (
            scores[k, 1] == scores[best, 1]
            and (seg.start, seg.length) < (cur.start, cur.length)
        ):
            best = k
    return proposals.segments[best]


def coarse_result(scores: np.ndarray, proposals: ProposalSet) -> CoarseResult:
    best = select_best(scores, proposals)
    return CoarseResult(
        best=best,
        scores=scores,
        m_sum=scores.sum(axis=0),
        m_max=scores[scores[:, 1].argmax()],
    )
