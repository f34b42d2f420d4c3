"""Parameterized layers: affine maps and the LSTM cell.

Weight layout is ``(out, in)`` everywhere; biases are ``(1, out)`` row
vectors.  The LSTM packs its four gates along the output axis in the fixed
order input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class Affine:
    weight: Tensor  # (out, in)
    bias: Tensor    # (1, out)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight, self.bias)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class LstmCellParams:
    """One direction of an LSTM.

    ``w_input`` is (4H, in), ``w_hidden`` is (4H, H), ``bias`` is (1, 4H),
    with gates ordered input, forget, candidate, output along the 4H axis.
    The forget-gate bias section starts at 1.0.
    """

    w_input: Tensor
    w_hidden: Tensor
    bias: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.shape[1]


def init_affine(rng: np.random.Generator, n_in: int, n_out: int, scale: float) -> Affine:
    weight = Tensor(rng.uniform(-scale, scale, size=(n_out, n_in)), requires_grad=True)
    bias = Tensor(np.zeros((1, n_out)), requires_grad=True)
    return Affine(weight, bias)


def init_lstm_cell(rng: np.random.Generator, n_in: int, hidden: int, scale: float) -> LstmCellParams:
    w_input = Tensor(rng.uniform(-scale, scale, size=(4 * hidden, n_in)), requires_grad=True)
    w_hidden = Tensor(rng.uniform(-scale, scale, size=(4 * hidden, hidden)), requires_grad=True)
    b = np.zeros((1, 4 * hidden))
    b[0, hidden : 2 * hidden] = 1.0
    return LstmCellParams(w_input, w_hidden, Tensor(b, requires_grad=True))


def lstm_run(steps: list[Tensor], cell: LstmCellParams, reverse: bool = False) -> list[Tensor]:
    """Run one LSTM direction over ``(1, in)`` step inputs.

    States start at zero.  The returned list is aligned with ``steps``:
    entry t is the hidden state at position t, which for a reversed run is
    the state after consuming steps T-1..t.
    """
    hidden = cell.hidden_size
    wx_t = ad.transpose(cell.w_input)
    wh_t = ad.transpose(cell.w_hidden)
    h = Tensor(np.zeros((1, hidden)))
    c = Tensor(np.zeros((1, hidden)))
    order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
    out: list[Tensor | None] = [None] * len(steps)
    for idx in order:
        pre = ad.add(ad.add(ad.matmul(steps[idx], wx_t), ad.matmul(h, wh_t)), cell.bias)
        gate_in = ad.sigmoid(ad.slice_cols(pre, 0, hidden))
        gate_forget = ad.sigmoid(ad.slice_cols(pre, hidden, 2 * hidden))
        candidate = ad.tanh(ad.slice_cols(pre, 2 * hidden, 3 * hidden))
        gate_out = ad.sigmoid(ad.slice_cols(pre, 3 * hidden, 4 * hidden))
        c = ad.add(ad.mul(gate_forget, c), ad.mul(gate_in, candidate))
        h = ad.mul(gate_out, ad.tanh(c))
        out[idx] = h
    return out  # type: ignore[return-value]
