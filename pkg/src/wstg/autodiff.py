"""Dense-tensor math with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a float64 numpy array.  Operations build a
define-by-run graph: each result node keeps references to its parents and
a closure that routes the incoming gradient to them.  Calling
:meth:`Tensor.backward` on a scalar walks the graph once in reverse
topological order.  The graph is rebuilt on every forward pass and a
second ``backward`` on the same loss raises.

Only the shapes the grounding model actually uses are supported: tensors
are one- or two-dimensional, elementwise ops require equal shapes, and the
single broadcast form is adding a row vector to a matrix
(:func:`add_rowvec`).  Everything is float64 so finite-difference gradient
checks are decisive.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError

Array = np.ndarray


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[Array], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 2:
            raise DimensionError(f"tensors are at most 2-D, got shape {self.data.shape}")
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` for every reachable tensor with ``requires_grad``.

        The loss must be a single-element tensor.  Re-running backward on
        the same node raises; rebuild the graph instead.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._consumed:
            raise RuntimeError("backward already ran on this tensor; rebuild the graph")
        self._consumed = True

        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; the module-level functions are the primary API.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS; LSTM graphs are deep enough to overflow recursion.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _node(data: Array, parents: Sequence[Tensor], backward: Callable[[Array], None]) -> Tensor:
    # Nodes without a differentiable ancestor carry no tape: inference with
    # frozen parameters runs as plain numpy.
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tracked, _backward=backward)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul requires 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: inner extents differ, {a.data.shape} @ {b.data.shape}")

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def add_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """Add a ``(1, d)`` row vector to every row of an ``(n, d)`` matrix."""
    if m.data.ndim != 2 or v.data.shape != (1, m.data.shape[1]):
        raise DimensionError(f"add_rowvec: {m.data.shape} + {v.data.shape}")

    def backward(g: Array) -> None:
        if m.requires_grad:
            m._accumulate(g)
        if v.requires_grad:
            v._accumulate(g.sum(axis=0, keepdims=True))

    return _node(m.data + v.data, (m, v), backward)


def add_const(a: Tensor, c: float) -> Tensor:
    def backward(g: Array) -> None:
        a._accumulate(g)

    return _node(a.data + c, (a,), backward)


def mul_const(a: Tensor, c: float) -> Tensor:
    def backward(g: Array) -> None:
        a._accumulate(g * c)

    return _node(a.data * c, (a,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so neither branch exponentiates a large positive value.
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g: Array) -> None:
        x._accumulate(g * out * (1.0 - out))

    return _node(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g: Array) -> None:
        x._accumulate(g * (1.0 - out * out))

    return _node(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    # Subgradient 0 at the kink, so a hinge sitting exactly at the margin
    # contributes no gradient.
    mask = x.data > 0

    def backward(g: Array) -> None:
        x._accumulate(g * mask)

    return _node(x.data * mask, (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError("log requires strictly positive inputs; clamp first")
    out = np.log(x.data)

    def backward(g: Array) -> None:
        x._accumulate(g / x.data)

    return _node(out, (x,), backward)


def softmax_axis(x: Tensor, axis: int) -> Tensor:
    """Exp-normalize along ``axis`` with max-subtraction for stability."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"softmax_axis: axis {axis} invalid for shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        x._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _node(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty list")
    ndim = tensors[0].data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"concat: axis {axis} invalid for rank {ndim}")
    axis = axis % ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise DimensionError("concat: rank mismatch")
        for d in range(ndim):
            if d != axis and t.data.shape[d] != tensors[0].data.shape[d]:
                raise DimensionError(
                    f"concat: shapes {t.data.shape} vs {tensors[0].data.shape} differ off-axis"
                )
    parents = tuple(tensors)
    sizes = [t.data.shape[axis] for t in parents]
    offsets = np.cumsum([0] + sizes)

    def backward(g: Array) -> None:
        for t, lo, hi in zip(parents, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx: list = [slice(None)] * ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _node(np.concatenate([t.data for t in parents], axis=axis), parents, backward)


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    """Maxima along ``axis`` (kept as size 1); ties route the gradient to
    the lowest index."""
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DimensionError(f"max_over_axis: axis {axis} invalid for shape {x.data.shape}")
    if x.data.shape[axis] < 1:
        raise DimensionError("max_over_axis over an empty axis")
    idx = np.expand_dims(x.data.argmax(axis=axis), axis=axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def backward(g: Array) -> None:
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g, axis=axis)
        x._accumulate(full)

    return _node(out, (x,), backward)


def sum_over_axis(x: Tensor, axis: int) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        x._accumulate(np.broadcast_to(g, x.data.shape).copy())

    return _node(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out = np.array(x.data.sum())

    def backward(g: Array) -> None:
        x._accumulate(np.full_like(x.data, float(g)))

    return _node(out, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("transpose requires a 2-D tensor")

    def backward(g: Array) -> None:
        x._accumulate(g.T)

    return _node(x.data.T, (x,), backward)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 2 or not 0 <= start < stop <= x.data.shape[0]:
        raise DimensionError(f"slice_rows[{start}:{stop}] of shape {x.data.shape}")

    def backward(g: Array) -> None:
        full = np.zeros_like(x.data)
        full[start:stop] = g
        x._accumulate(full)

    return _node(x.data[start:stop].copy(), (x,), backward)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 2 or not 0 <= start < stop <= x.data.shape[1]:
        raise DimensionError(f"slice_cols[{start}:{stop}] of shape {x.data.shape}")

    def backward(g: Array) -> None:
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        x._accumulate(full)

    return _node(x.data[:, start:stop].copy(), (x,), backward)


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows of a 2-D tensor; the backward pass scatter-adds."""
    if table.data.ndim != 2:
        raise DimensionError("gather_rows requires a 2-D table")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise DimensionError("gather_rows requires a nonempty 1-D index list")
    if idx.min() < 0 or idx.max() >= table.data.shape[0]:
        raise DimensionError(f"gather_rows: index out of range for {table.data.shape[0]} rows")

    def backward(g: Array) -> None:
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table._accumulate(full)

    return _node(table.data[idx].copy(), (table,), backward)


def repeat_rows(v: Tensor, n: int) -> Tensor:
    """Tile a ``(1, d)`` row vector into an ``(n, d)`` matrix."""
    if v.data.ndim != 2 or v.data.shape[0] != 1 or n < 1:
        raise DimensionError(f"repeat_rows needs a (1, d) input and n >= 1, got {v.data.shape}")

    def backward(g: Array) -> None:
        v._accumulate(g.sum(axis=0, keepdims=True))

    return _node(np.repeat(v.data, n, axis=0), (v,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for weight ``(out, in)``, bias ``(1, out)``."""
    return add_rowvec(matmul(x, transpose(weight)), bias)
