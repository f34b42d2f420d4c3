"""Two-stage training: MIL cross-entropy for the coarse stage, then the
hinge ranking loss for the fine stage with everything else frozen.

Coarse batches pair each aligned (video, sentence) example with one
misaligned example built by rotating the sentences within the batch (the
rotation skips partners that share the video).  Fine batches score every
ordered (video, sentence) combination in the batch; the loss sums the
two hinge terms over all in-batch negatives.

All shuffling is derived from the config seed, so a run is reproducible
bit for bit.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .coarse import coarse_loss, pooled_proposal_features, score_pooled, select_best
from .config import TrainConfig
from .dataset import Batch, Corpus, TrainQuery, make_batches, strip_gt
from .encoders import EncodedVideo
from .errors import CheckpointError, InputError
from .fine import ExpandedWindow, expand, fine_loss, frame_scores, video_sentence_score
from .model import (
    ModelParams,
    encode_tokens,
    encode_video_features,
    infer_query,
    init_model,
    window_config_from,
)
from .proposals import ProposalSet, generate

logger = logging.getLogger(__name__)


class Adam:
    """Adam with global-norm gradient clipping."""

    def __init__(self, params: list[Tensor], config: TrainConfig):
        self.params = params
        self.lr = config.lr
        self.beta1, self.beta2 = config.adam_beta1, config.adam_beta2
        self.eps = config.adam_eps
        self.clip = config.grad_clip
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in params]
        self._v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _clip_gradients(self) -> None:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float((p.grad * p.grad).sum())
        norm = np.sqrt(total)
        if norm > self.clip:
            scale = self.clip / norm
            for p in self.params:
                if p.grad is not None:
                    p.grad *= scale
            logger.debug("clipped gradients: norm %.3f -> %.1f", norm, self.clip)

    def step(self) -> None:
        self._clip_gradients()
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad * p.grad
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _epoch_seed(seed: int, stage: int, epoch: int) -> int:
    return int(np.random.SeedSequence((seed, stage, epoch)).generate_state(1)[0])


def _misaligned_partner(batch: Batch, i: int) -> int | None:
    """Rotated index whose video differs; None if every pair shares it."""
    n = len(batch)
    for offset in range(1, n):
        j = (i + offset) % n
        if batch.queries[j].video_id != batch.queries[i].video_id:
            return j
    return None


def _sum_terms(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return total


@dataclass
class TrainResult:
    model: ModelParams
    epoch_losses: list[float] = field(default_factory=list)


def _proposal_cache(corpus: Corpus, config: TrainConfig) -> dict[str, ProposalSet]:
    window_config = window_config_from(config)
    return {
        vid: generate(rec.num_frames, window_config)
        for vid, rec in corpus.videos.items()
    }


def _feature_dim(corpus: Corpus) -> int:
    return next(iter(corpus.videos.values())).features.shape[1]


def resolve_avg_train_length(corpus: Corpus, config: TrainConfig) -> TrainConfig:
    if config.avg_train_length is None:
        config.avg_train_length = corpus.avg_train_length()
    return config


def train_coarse(corpus: Corpus, config: TrainConfig, model: ModelParams | None = None) -> TrainResult:
    """Train encoders plus the coarse head with MIL cross-entropy."""
    config.validate()
    resolve_avg_train_length(corpus, config)
    queries = strip_gt(corpus.split_queries("train"))
    if not queries:
        raise InputError("corpus has no training queries")
    if model is None:
        model = init_model(config, len(corpus.vocab), _feature_dim(corpus))
    model.set_trainable(coarse=True, fine=False)
    proposals = _proposal_cache(corpus, config)
    optimizer = Adam(model.coarse_stage_tensors(), config)

    result = TrainResult(model=model)
    start = time.monotonic()
    for epoch in range(config.coarse_epochs):
        batches = make_batches(queries, config.batch_size, _epoch_seed(config.seed, 0, epoch))
        epoch_loss = 0.0
        contributions = 0
        for batch in batches:
            terms: list[Tensor] = []
            sentences = [encode_tokens(model, q.tokens).sentence for q in batch.queries]
            for i, query in enumerate(batch.queries):
                video = corpus.videos[query.video_id]
                encoded = encode_video_features(model, video.features)
                f_video = pooled_proposal_features(encoded, proposals[query.video_id], model.coarse)
                aligned = score_pooled(f_video, sentences[i], model.coarse)
                terms.append(coarse_loss(aligned, (0, 1)))
                j = _misaligned_partner(batch, i)
                if j is not None:
                    crossed = score_pooled(f_video, sentences[j], model.coarse)
                    terms.append(coarse_loss(crossed, (1, 0)))
            batch_loss = ad.mul_const(_sum_terms(terms), 1.0 / len(terms))
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            epoch_loss += batch_loss.data.item() * len(terms)
            contributions += len(terms)
        mean_loss = epoch_loss / max(contributions, 1)
        result.epoch_losses.append(mean_loss)
        logger.info("coarse epoch %d/%d loss %.4f", epoch + 1, config.coarse_epochs, mean_loss)
    logger.info("coarse stage done in %.1fs", time.monotonic() - start)
    return result


@dataclass
class _FrozenPair:
    """Constant encodings for one training query under frozen encoders."""

    index: int
    query: TrainQuery
    video_hidden: Tensor      # (T, 2H), constant
    sentence_vec: Tensor      # (1, 2H), constant
    num_frames: int

    @property
    def video_id(self) -> str:
        return self.query.video_id


class _FineContext:
    """Precomputed constants for fine training: encodings per query and a
    lazily filled cache of expanded coarse windows per (video, sentence)."""

    def __init__(self, corpus: Corpus, config: TrainConfig, model: ModelParams):
        self.config = config
        self.model = model
        self.proposals = _proposal_cache(corpus, config)
        self.pairs: list[_FrozenPair] = []
        self._windows: dict[tuple[str, int], ExpandedWindow] = {}
        for idx, query in enumerate(strip_gt(corpus.split_queries("train"))):
            video = corpus.videos[query.video_id]
            encoded = encode_video_features(model, video.features)
            sentence = encode_tokens(model, query.tokens).sentence
            self.pairs.append(_FrozenPair(
                index=idx,
                query=query,
                video_hidden=Tensor(encoded.hidden.data),
                sentence_vec=Tensor(sentence.data),
                num_frames=video.num_frames,
            ))

    def window(self, video_pair: _FrozenPair, sentence_pair: _FrozenPair) -> ExpandedWindow:
        key = (video_pair.video_id, sentence_pair.index)
        cached = self._windows.get(key)
        if cached is None:
            props = self.proposals[video_pair.video_id]
            scores = score_pooled(
                pooled_proposal_features(
                    EncodedVideo(hidden=video_pair.video_hidden), props, self.model.coarse
                ),
                sentence_pair.sentence_vec,
                self.model.coarse,
            )
            best = select_best(scores.data, props)
            cached = expand(best, self.config.expand_rate, video_pair.num_frames)
            self._windows[key] = cached
        return cached

    def pair_score(self, video_pair: _FrozenPair, sentence_pair: _FrozenPair) -> Tensor:
        window = self.window(video_pair, sentence_pair)
        scores = frame_scores(
            EncodedVideo(hidden=video_pair.video_hidden),
            sentence_pair.sentence_vec,
            window,
            self.model.fine,
        )
        return video_sentence_score(scores)


def train_fine(corpus: Corpus, config: TrainConfig, model: ModelParams,
               stage_tag: str = "coarse") -> TrainResult:
    """Train the fine head against frozen encoders and coarse stage."""
    if stage_tag != "coarse":
        raise CheckpointError(f"fine training needs a coarse checkpoint, got stage {stage_tag!r}")
    config.validate()
    resolve_avg_train_length(corpus, config)
    model.set_trainable(coarse=False, fine=True)
    context = _FineContext(corpus, config, model)
    if not context.pairs:
        raise InputError("corpus has no training queries")
    optimizer = Adam(model.fine_stage_tensors(), config)

    result = TrainResult(model=model)
    start = time.monotonic()
    for epoch in range(config.fine_epochs):
        batches = make_batches(context.pairs, config.batch_size, _epoch_seed(config.seed, 1, epoch))
        epoch_loss = 0.0
        hinge_pairs = 0
        for batch in batches:
            pairs: list[_FrozenPair] = batch.queries
            scores = {
                (vi.index, sj.index): context.pair_score(vi, sj)
                for vi in pairs for sj in pairs
            }
            terms: list[Tensor] = []
            for pi in pairs:
                pos = scores[(pi.index, pi.index)]
                for pj in pairs:
                    if pj.index == pi.index or pj.video_id == pi.video_id:
                        continue
                    neg_video = scores[(pj.index, pi.index)]
                    neg_sentence = scores[(pi.index, pj.index)]
                    terms.append(fine_loss(pos, neg_sentence, neg_video, config.margin))
            if not terms:
                continue
            total = _sum_terms(terms)
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            epoch_loss += total.data.item()
            hinge_pairs += len(terms)
        result.epoch_losses.append(epoch_loss / max(hinge_pairs, 1))
        logger.info("fine epoch %d/%d loss %.4f", epoch + 1, config.fine_epochs,
                    result.epoch_losses[-1])
    logger.info("fine stage done in %.1fs", time.monotonic() - start)
    return result


def predict_split(model: ModelParams, corpus: Corpus, config: TrainConfig, split: str,
                  coarse_only: bool = False):
    """Run inference over one corpus split; returns (query, result) pairs."""
    model.set_trainable(coarse=False, fine=False)
    results = []
    for query in corpus.split_queries(split):
        video = corpus.videos[query.video_id]
        results.append(
            (query, infer_query(model, video.features, query.tokens, config, coarse_only))
        )
    return results
