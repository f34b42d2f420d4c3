"""Grounding metrics: temporal IoU, R@1 at IoU thresholds, mean IoU, the
random-proposal baseline, and report serialization.

Intervals are inclusive frame ranges, so lengths count ``end - start + 1``
(one feature per second of video).  The report file is comma-separated:
a ``eta,recall`` header, one row per threshold, then a ``miou`` row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, ParseError
from .proposals import ProposalSet, Segment


def temporal_iou(a: Segment, b: Segment) -> float:
    """Intersection over union of two inclusive frame intervals."""
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union


def _check_paired(predictions: Sequence[Segment], ground_truths: Sequence[Segment]) -> None:
    if len(predictions) != len(ground_truths):
        raise InputError(
            f"{len(predictions)} predictions vs {len(ground_truths)} ground truths"
        )
    if len(predictions) == 0:
        raise InputError("cannot evaluate an empty query set")


def recall_at_1(
    predictions: Sequence[Segment], ground_truths: Sequence[Segment], eta: float
) -> float:
    """Fraction of queries whose prediction reaches IoU >= eta."""
    _check_paired(predictions, ground_truths)
    hits = sum(
        1 for p, g in zip(predictions, ground_truths) if temporal_iou(p, g) >= eta
    )
    return hits / len(predictions)


def mean_iou(predictions: Sequence[Segment], ground_truths: Sequence[Segment]) -> float:
    _check_paired(predictions, ground_truths)
    total = sum(temporal_iou(p, g) for p, g in zip(predictions, ground_truths))
    return total / len(predictions)


@dataclass
class EvalReport:
    etas: list[float]
    recalls: list[float]
    miou: float
    query_count: int

    def __post_init__(self):
        if len(self.etas) != len(self.recalls):
            raise InputError("one recall per eta required")

    def to_csv_text(self) -> str:
        lines = ["eta,recall"]
        lines += [f"{eta:.2f},{recall:.6f}" for eta, recall in zip(self.etas, self.recalls)]
        lines.append(f"miou,{self.miou:.6f}")
        return "\n".join(lines) + "\n"

    def render_table(self, label: str = "result") -> str:
        headers = [f"R@1,IoU={eta:.2f}" for eta in self.etas] + ["mIoU"]
        cells = [f"{r:.4f}" for r in self.recalls] + [f"{self.miou:.4f}"]
        name_w = max(len("Method"), len(label))
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        head = "  ".join(["Method".ljust(name_w)] + [h.rjust(w) for h, w in zip(headers, widths)])
        row = "  ".join([label.ljust(name_w)] + [c.rjust(w) for c, w in zip(cells, widths)])
        return head + "\n" + row + "\n"


def evaluate(
    predictions: Sequence[Segment],
    ground_truths: Sequence[Segment],
    etas: Sequence[float],
) -> EvalReport:
    recalls = [recall_at_1(predictions, ground_truths, eta) for eta in etas]
    return EvalReport(
        etas=list(etas),
        recalls=recalls,
        miou=mean_iou(predictions, ground_truths),
        query_count=len(predictions),
    )


def random_baseline(
    proposal_sets: Sequence[ProposalSet],
    ground_truths: Sequence[Segment],
    etas: Sequence[float],
    seed: int,
) -> EvalReport:
    """Evaluate one uniformly sampled proposal per query (seeded)."""
    _check_paired(proposal_sets, ground_truths)
    rng = np.random.default_rng(seed)
    picks = [ps.segments[int(rng.integers(0, len(ps)))] for ps in proposal_sets]
    return evaluate(picks, ground_truths, etas)


def parse_report(text: str, source: str = "<string>") -> EvalReport:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0] != "eta,recall":
        raise ParseError(f"{source}: expected 'eta,recall' header")
    etas: list[float] = []
    recalls: list[float] = []
    miou = None
    for ln in lines[1:]:
        key, _, value = ln.partition(",")
        if not value:
            raise ParseError(f"{source}: malformed row {ln!r}")
        if key == "miou":
            miou = float(value)
        else:
            etas.append(float(key))
            recalls.append(float(value))
    if miou is None:
        raise ParseError(f"{source}: missing miou row")
    return EvalReport(etas=etas, recalls=recalls, miou=miou, query_count=0)
