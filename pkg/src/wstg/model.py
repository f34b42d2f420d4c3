"""The full grounding model: parameter container, initialization,
checkpoint conversion, and the inference pipeline.

Parameter initialization draws from a single seeded generator in a fixed
documented order (embedding, text LSTM, frame projection, video LSTM,
coarse head, fine head), so a seed pins every weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .checkpoint import Checkpoint
from .coarse import CoarseHead, GateParams, score_proposals, select_best
from .config import TrainConfig, config_from_text, config_to_text
from .encoders import EncodedSentence, EncodedVideo, encode_sentence, encode_video
from .errors import CheckpointError, InputError
from .fine import ExpandedWindow, FineHead, expand, frame_scores
from .grouping import aggregate_and_select, normalize, watershed_candidates
from .layers import Affine, LstmCellParams, init_affine, init_lstm_cell
from .proposals import ProposalSet, Segment, WindowConfig, generate


@dataclass
class ModelParams:
    embedding: Tensor
    text_fwd: LstmCellParams
    text_bwd: LstmCellParams
    frame_proj: Affine
    video_fwd: LstmCellParams
    video_bwd: LstmCellParams
    coarse: CoarseHead
    fine: FineHead

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"embedding": self.embedding}
        for tag, cell in (("text_lstm.fwd", self.text_fwd), ("text_lstm.bwd", self.text_bwd),
                          ("video_lstm.fwd", self.video_fwd), ("video_lstm.bwd", self.video_bwd)):
            out[f"{tag}.w_input"] = cell.w_input
            out[f"{tag}.w_hidden"] = cell.w_hidden
            out[f"{tag}.bias"] = cell.bias
        affines = {
            "frame_proj": self.frame_proj,
            "coarse.frame_map": self.coarse.frame_map,
            "coarse.sent_map": self.coarse.sent_map,
            "coarse.gate_video": self.coarse.gates.video,
            "coarse.gate_sentence": self.coarse.gates.sentence,
            "coarse.fuse_map": self.coarse.fuse_map,
            "coarse.cls_head": self.coarse.cls_head,
            "coarse.slc_head": self.coarse.slc_head,
            "fine.frame_map": self.fine.frame_map,
            "fine.sent_map": self.fine.sent_map,
            "fine.fuse_map": self.fine.fuse_map,
            "fine.score_head": self.fine.score_head,
        }
        for tag, aff in affines.items():
            out[f"{tag}.weight"] = aff.weight
            out[f"{tag}.bias"] = aff.bias
        return out

    def coarse_stage_tensors(self) -> list[Tensor]:
        """Encoders plus coarse head: everything the first stage trains."""
        return [t for name, t in sorted(self.named().items()) if not name.startswith("fine.")]

    def fine_stage_tensors(self) -> list[Tensor]:
        return [t for name, t in sorted(self.named().items()) if name.startswith("fine.")]

    def set_trainable(self, coarse: bool, fine: bool) -> None:
        for t in self.coarse_stage_tensors():
            t.requires_grad = coarse
        for t in self.fine_stage_tensors():
            t.requires_grad = fine

    def to_param_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named().items()}


def init_model(config: TrainConfig, vocab_size: int, feature_dim: int) -> ModelParams:
    """Seeded initialization; weights uniform within 1/sqrt(hidden),
    embeddings uniform within 0.08, LSTM forget biases at 1."""
    rng = np.random.default_rng(config.seed)
    hidden, embed = config.hidden_size, config.embed_dim
    scale = 1.0 / np.sqrt(hidden)
    embedding = Tensor(rng.uniform(-0.08, 0.08, size=(vocab_size, embed)), requires_grad=True)
    text_fwd = init_lstm_cell(rng, embed, hidden, scale)
    text_bwd = init_lstm_cell(rng, embed, hidden, scale)
    frame_proj = init_affine(rng, feature_dim, hidden, scale)
    video_fwd = init_lstm_cell(rng, hidden, hidden, scale)
    video_bwd = init_lstm_cell(rng, hidden, hidden, scale)
    coarse = CoarseHead(
        frame_map=init_affine(rng, 2 * hidden, hidden, scale),
        sent_map=init_affine(rng, 2 * hidden, hidden, scale),
        gates=GateParams(
            video=init_affine(rng, 2 * hidden, hidden, scale),
            sentence=init_affine(rng, 2 * hidden, hidden, scale),
        ),
        fuse_map=init_affine(rng, 2 * hidden, hidden, scale),
        cls_head=init_affine(rng, 3 * hidden, 2, scale),
        slc_head=init_affine(rng, 3 * hidden, 2, scale),
    )
    fine = FineHead(
        frame_map=init_affine(rng, 2 * hidden, hidden, scale),
        sent_map=init_affine(rng, 2 * hidden, hidden, scale),
        fuse_map=init_affine(rng, 2 * hidden, hidden, scale),
        score_head=init_affine(rng, 3 * hidden, 1, scale),
    )
    return ModelParams(
        embedding=embedding, text_fwd=text_fwd, text_bwd=text_bwd,
        frame_proj=frame_proj, video_fwd=video_fwd, video_bwd=video_bwd,
        coarse=coarse, fine=fine,
    )


def params_from_arrays(
    config: TrainConfig, arrays: dict[str, np.ndarray], trainable: bool = False
) -> ModelParams:
    """Rebuild a ModelParams from named arrays (e.g. a checkpoint)."""
    vocab_size, embed = arrays["embedding"].shape
    feature_dim = arrays["frame_proj.weight"].shape[1]
    if embed != config.embed_dim:
        raise CheckpointError(f"embedding dim {embed} != config embed_dim {config.embed_dim}")
    if arrays["frame_proj.weight"].shape[0] != config.hidden_size:
        raise CheckpointError("hidden size mismatch between checkpoint and config")
    model = init_model(config, vocab_size, feature_dim)
    named = model.named()
    missing = sorted(set(named) - set(arrays))
    extra = sorted(set(arrays) - set(named))
    if missing or extra:
        raise CheckpointError(f"parameter name mismatch: missing={missing} extra={extra}")
    for name, tensor in named.items():
        if tensor.data.shape != arrays[name].shape:
            raise CheckpointError(
                f"{name}: checkpoint shape {arrays[name].shape} != expected {tensor.data.shape}"
            )
        tensor.data = arrays[name].astype(np.float64).copy()
        tensor.requires_grad = trainable
        tensor.grad = None
    return model


def make_checkpoint(model: ModelParams, stage: str, epoch: int, config: TrainConfig) -> Checkpoint:
    return Checkpoint(
        stage=stage, epoch=epoch,
        config_text=config_to_text(config),
        params=model.to_param_arrays(),
    )


def model_from_checkpoint(ckpt: Checkpoint, trainable: bool = False) -> tuple[ModelParams, TrainConfig]:
    config = config_from_text(ckpt.config_text)
    return params_from_arrays(config, ckpt.params, trainable=trainable), config


def window_config_from(config: TrainConfig) -> WindowConfig:
    if config.avg_train_length is None:
        raise InputError("avg_train_length unset; train first or set it in the config")
    return WindowConfig(
        avg_train_length=config.avg_train_length,
        scale_fractions=config.window_fractions,
        overlap=config.overlap,
    )


# ---------------------------------------------------------------------------
# Inference pipeline


@dataclass
class InferenceResult:
    coarse_segment: Segment
    final_segment: Segment
    window: ExpandedWindow | None                 # None in coarse-only mode
    raw_frame_scores: np.ndarray | None           # aligned to the window
    proposals: ProposalSet


def encode_video_features(model: ModelParams, features: np.ndarray) -> EncodedVideo:
    return encode_video(Tensor(features), model.frame_proj, model.video_fwd, model.video_bwd)


def encode_tokens(model: ModelParams, tokens: list[int]) -> EncodedSentence:
    return encode_sentence(tokens, model.embedding, model.text_fwd, model.text_bwd)


def coarse_segment_for(
    model: ModelParams,
    encoded: EncodedVideo,
    sentence_vec: Tensor,
    proposals: ProposalSet,
) -> Segment:
    scores = score_proposals(encoded, sentence_vec, proposals, model.coarse)
    return select_best(scores.data, proposals)


def infer_query(
    model: ModelParams,
    features: np.ndarray,
    tokens: list[int],
    config: TrainConfig,
    coarse_only: bool = False,
) -> InferenceResult:
    """Full pipeline: encode, propose, pick the best proposal, expand it,
    score its frames, and group them into the final segment."""
    window_config = window_config_from(config)
    num_frames = features.shape[0]
    proposals = generate(num_frames, window_config)
    encoded = encode_video_features(model, features)
    sentence = encode_tokens(model, tokens).sentence
    coarse_seg = coarse_segment_for(model, encoded, sentence, proposals)
    if coarse_only:
        return InferenceResult(
            coarse_segment=coarse_seg, final_segment=coarse_seg,
            window=None, raw_frame_scores=None, proposals=proposals,
        )
    window = expand(coarse_seg, config.expand_rate, num_frames)
    scores = frame_scores(encoded, sentence, window, model.fine)
    raw = scores.values.data.reshape(-1).copy()
    normalized = normalize(raw)
    candidates = watershed_candidates(normalized, config.thresholds)
    final = aggregate_and_select(
        candidates, normalized, fallback=coarse_seg, offset=window.window.start
    )
    return InferenceResult(
        coarse_segment=coarse_seg, final_segment=final,
        window=window, raw_frame_scores=raw, proposals=proposals,
    )
