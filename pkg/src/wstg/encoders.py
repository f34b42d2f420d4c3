"""Visual and text encoders: frame projection plus Bi-LSTMs.

The visual side projects raw per-second frame features to the hidden size
and runs a bidirectional LSTM over them; the text side embeds token ids
and does the same.  A sentence is summarized by concatenating the forward
direction's final state with the backward direction's final state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyInputError, InputError
from .layers import Affine, LstmCellParams, lstm_run


@dataclass
class EncodedVideo:
    """Per-frame Bi-LSTM states (T, 2H) and the projected inputs (T, H).

    ``projected`` may be None for encodings rebuilt from cached states.
    """

    hidden: Tensor
    projected: Tensor | None = None

    @property
    def num_frames(self) -> int:
        return self.hidden.shape[0]


@dataclass
class EncodedSentence:
    """Per-token Bi-LSTM states (N, 2H) and the sentence vector (1, 2H)."""

    states: Tensor
    sentence: Tensor


def project_frames(features: Tensor, projection: Affine) -> Tensor:
    """Map raw frame features (T, D) to (T, H) with one affine layer."""
    if features.shape[0] == 0:
        raise EmptyInputError("cannot project an empty frame sequence")
    return projection(features)


def bilstm(inputs: Tensor, fwd: LstmCellParams, bwd: LstmCellParams) -> Tensor:
    """Return (T, 2H): forward state at t concatenated with backward state at t."""
    n = inputs.shape[0]
    if n == 0:
        raise EmptyInputError("bilstm over an empty sequence")
    steps = [ad.slice_rows(inputs, t, t + 1) for t in range(n)]
    hf = lstm_run(steps, fwd)
    hb = lstm_run(steps, bwd, reverse=True)
    return ad.concat([ad.concat(hf, axis=0), ad.concat(hb, axis=0)], axis=1)


def encode_video(features: Tensor, projection: Affine, fwd: LstmCellParams,
                 bwd: LstmCellParams) -> EncodedVideo:
    projected = project_frames(features, projection)
    return EncodedVideo(hidden=bilstm(projected, fwd, bwd), projected=projected)


def encode_sentence(
    tokens: Sequence[int],
    embedding: Tensor,
    fwd: LstmCellParams,
    bwd: LstmCellParams,
) -> EncodedSentence:
    """Embed token ids, run the Bi-LSTM, and build the sentence vector.

    The sentence vector concatenates the forward state after the last
    token with the backward state after the first token.
    """
    if len(tokens) == 0:
        raise EmptyInputError("cannot encode an empty token sequence")
    vocab = embedding.shape[0]
    for tok in tokens:
        if not 0 <= int(tok) < vocab:
            raise InputError(f"token id {tok} outside vocabulary of size {vocab}")
    embedded = ad.gather_rows(embedding, [int(t) for t in tokens])
    steps = [ad.slice_rows(embedded, t, t + 1) for t in range(len(tokens))]
    hf = lstm_run(steps, fwd)
    hb = lstm_run(steps, bwd, reverse=True)
    states = ad.concat([ad.concat(hf, axis=0), ad.concat(hb, axis=0)], axis=1)
    sentence = ad.concat([hf[-1], hb[0]], axis=1)
    return EncodedSentence(states=states, sentence=sentence)
