"""Finite-difference gradient verification.

The checker perturbs inputs one coordinate at a time and compares the
central difference against the analytic gradient from the tape.  It only
ever calls the forward path, so it stays independent of the backward
implementation it is judging.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class GradCheckResult:
    """Per-coordinate comparison summary.

    A coordinate passes when its error is within ``abs_tol`` absolutely or
    ``rel_tol`` relatively; ``violations`` counts the coordinates that
    satisfied neither.
    """

    violations: int
    checked: int
    max_abs_error: float
    max_rel_error: float

    def ok(self) -> bool:
        return self.violations == 0


def check_gradients(
    fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-7,
    max_coords_per_input: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare analytic and central-difference gradients of ``fn``.

    ``fn`` maps the given tensors to a scalar loss.  When an input has many
    coordinates, ``max_coords_per_input`` limits how many are perturbed
    (chosen by ``rng``); all coordinates are checked otherwise.
    """
    for t in inputs:
        t.zero_grad()
    loss = fn(inputs)
    loss.backward()

    violations = 0
    checked = 0
    max_abs = 0.0
    max_rel = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = np.arange(n)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = fn(inputs).data.item()
            flat[c] = orig - h
            down = fn(inputs).data.item()
            flat[c] = orig
            numeric = (up - down) / (2.0 * h)
            analytic = float(grad.reshape(-1)[c])
            abs_err = abs(numeric - analytic)
            rel_err = abs_err / max(abs(numeric), abs(analytic), 1e-12)
            max_abs = max(max_abs, abs_err)
            max_rel = max(max_rel, rel_err)
            if abs_err > abs_tol and rel_err > rel_tol:
                violations += 1
            checked += 1
    return GradCheckResult(
        violations=violations, checked=checked, max_abs_error=max_abs, max_rel_error=max_rel
    )
