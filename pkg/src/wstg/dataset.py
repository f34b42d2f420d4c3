"""Synthetic corpus with planted sentence-aligned segments, plus loaders
and batch construction.

Each video carries a handful of concept ids as its "sentence".  Inside a
planted segment covering 15-50% of the video, frames equal the mean of
those concepts' embedding vectors (from a table fixed by the corpus seed)
plus low noise; outside they are pure unit Gaussian noise.  Recovering the
planted segment from weak supervision is therefore measurable against the
hidden ground truth.

File formats (all little-endian):

* ``features/<video_id>.feat`` -- magic ``WSTG``, u32 frame count T,
  u32 feature dim D, then T*D float32 values row-major.
* ``annotations.tsv`` -- one query per line, tab-separated fields:
  video_id, space-separated integer token ids, gt_start, gt_end, split
  (``train`` or ``test``).
* ``vocab.txt`` -- one token string per line; the id is the line number.
* ``manifest.txt`` -- ``key=value`` generation parameters followed by one
  ``video=<id>`` line per video.

Ground-truth segments exist only on :class:`VideoRecord` and
:class:`QueryRecord`; training code receives :class:`TrainQuery` views
with the segment stripped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .proposals import Segment

FEATURE_MAGIC = b"WSTG"
SPLITS = ("train", "test")


@dataclass
class CorpusSpec:
    n_videos: int = 250
    feature_dim: int = 16
    vocab_size: int = 20
    t_min: int = 20
    t_max: int = 40
    seed: int = 7
    test_fraction: float = 0.2
    sigma_inside: float = 0.3
    sigma_outside: float = 1.0
    concept_scale: float = 1.0

    def validate(self) -> "CorpusSpec":
        if self.n_videos < 2:
            raise InputError("need at least two videos")
        if self.feature_dim < 2:
            raise InputError("feature dimension must be at least 2")
        if self.vocab_size < 4:
            raise InputError("vocabulary must hold at least 4 concepts")
        if not 1 <= self.t_min <= self.t_max:
            raise InputError(f"bad frame-count range [{self.t_min}, {self.t_max}]")
        if not 0 < self.test_fraction < 1:
            raise InputError("test_fraction must lie in (0, 1)")
        if min(self.n_test, self.n_videos - self.n_test) < 1:
            raise InputError("both splits need at least one video")
        if self.sigma_inside < 0 or self.sigma_outside < 0:
            raise InputError("noise scales must be nonnegative")
        if self.concept_scale <= 0:
            raise InputError("concept_scale must be positive")
        return self

    @property
    def n_test(self) -> int:
        return int(round(self.test_fraction * self.n_videos))


@dataclass
class VideoRecord:
    video_id: str
    features: np.ndarray        # (T, D) float32
    gt: Segment | None          # evaluation only; None if no query references it

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class QueryRecord:
    video_id: str
    tokens: list[int]
    gt: Segment                 # evaluation only
    split: str


@dataclass
class TrainQuery:
    """Ground-truth-free view handed to training code."""

    video_id: str
    tokens: list[int]


def strip_gt(queries: Iterable[QueryRecord]) -> list[TrainQuery]:
    return [TrainQuery(video_id=q.video_id, tokens=list(q.tokens)) for q in queries]


@dataclass
class Corpus:
    videos: dict[str, VideoRecord]
    queries: list[QueryRecord]
    vocab: list[str]
    manifest: dict[str, str]

    def split_queries(self, split: str) -> list[QueryRecord]:
        if split not in SPLITS:
            raise InputError(f"unknown split {split!r}")
        return [q for q in self.queries if q.split == split]

    def avg_train_length(self) -> float:
        train_ids = {q.video_id for q in self.split_queries("train")}
        lengths = [self.videos[v].num_frames for v in sorted(train_ids)]
        if not lengths:
            raise InputError("corpus has no training videos")
        return float(np.mean(lengths))


def concept_table(spec: CorpusSpec) -> np.ndarray:
    """Concept embedding table fixed by the corpus seed, (vocab, D)."""
    rng = np.random.default_rng(spec.seed)
    return spec.concept_scale * rng.normal(size=(spec.vocab_size, spec.feature_dim))


def generate_corpus(spec: CorpusSpec, out_dir: str | Path) -> Corpus:
    """Generate the corpus deterministically and write it to ``out_dir``."""
    spec.validate()
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    table = concept_table(spec)
    max_concepts = min(5, spec.vocab_size)

    videos: dict[str, VideoRecord] = {}
    queries: list[QueryRecord] = []
    n_train = spec.n_videos - spec.n_test
    for i in range(spec.n_videos):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(i,)))
        video_id = f"v{i:04d}"
        frames = int(rng.integers(spec.t_min, spec.t_max + 1))
        k = int(rng.integers(2, max_concepts + 1))
        tokens = sorted(int(t) for t in rng.choice(spec.vocab_size, size=k, replace=False))
        seg_len = max(1, round(frames * float(rng.uniform(0.15, 0.50))))
        seg_start = int(rng.integers(0, frames - seg_len + 1))
        gt = Segment(seg_start, seg_start + seg_len - 1)

        features = rng.normal(0.0, spec.sigma_outside, size=(frames, spec.feature_dim))
        inside = table[tokens].mean(axis=0) + rng.normal(
            0.0, spec.sigma_inside, size=(seg_len, spec.feature_dim)
        )
        features[seg_start : seg_start + seg_len] = inside
        features32 = features.astype("<f4")

        split = "train" if i < n_train else "test"
        videos[video_id] = VideoRecord(video_id=video_id, features=features32, gt=gt)
        queries.append(QueryRecord(video_id=video_id, tokens=tokens, gt=gt, split=split))
        _write_features(out / "features" / f"{video_id}.feat", features32)

    vocab = [f"concept{i:04d}" for i in range(spec.vocab_size)]
    (out / "vocab.txt").write_text("\n".join(vocab) + "\n")
    with open(out / "annotations.tsv", "w") as fh:
        for q in queries:
            toks = " ".join(str(t) for t in q.tokens)
            fh.write(f"{q.video_id}\t{toks}\t{q.gt.start}\t{q.gt.end}\t{q.split}\n")
    manifest = {
        "n_videos": str(spec.n_videos),
        "feature_dim": str(spec.feature_dim),
        "vocab_size": str(spec.vocab_size),
        "t_min": str(spec.t_min),
        "t_max": str(spec.t_max),
        "seed": str(spec.seed),
        "test_fraction": repr(spec.test_fraction),
        "sigma_inside": repr(spec.sigma_inside),
        "sigma_outside": repr(spec.sigma_outside),
        "concept_scale": repr(spec.concept_scale),
    }
    with open(out / "manifest.txt", "w") as fh:
        for key, value in manifest.items():
            fh.write(f"{key}={value}\n")
        for video_id in sorted(videos):
            fh.write(f"video={video_id}\n")
    return Corpus(videos=videos, queries=queries, vocab=vocab, manifest=manifest)


def _write_features(path: Path, features: np.ndarray) -> None:
    frames, dim = features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", frames, dim))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_features(path: str | Path) -> np.ndarray:
    """Read one ``.feat`` file, validating magic, header, and payload size."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != FEATURE_MAGIC:
        raise ParseError(f"{path}: not a feature file (bad magic or truncated header)")
    frames, dim = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * frames * dim
    if len(blob) != expected:
        raise ParseError(
            f"{path}: payload is {len(blob) - 12} bytes, expected {expected - 12} "
            f"for {frames}x{dim} float32"
        )
    if frames < 1 or dim < 1:
        raise ParseError(f"{path}: empty feature matrix {frames}x{dim}")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(frames, dim)
    if not np.isfinite(data).all():
        raise ParseError(f"{path}: non-finite feature values")
    return data.copy()


def _read_manifest(path: Path) -> tuple[dict[str, str], list[str]]:
    manifest: dict[str, str] = {}
    video_ids: list[str] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        if key == "video":
            video_ids.append(value)
        else:
            manifest[key] = value
    if not video_ids:
        raise ParseError(f"{path}: lists no videos")
    return manifest, video_ids


def load_corpus(root: str | Path) -> Corpus:
    """Load and fully validate a corpus directory."""
    root = Path(root)
    manifest_path = root / "manifest.txt"
    if not manifest_path.exists():
        raise ParseError(f"{manifest_path}: missing manifest")
    manifest, video_ids = _read_manifest(manifest_path)

    vocab_path = root / "vocab.txt"
    if not vocab_path.exists():
        raise ParseError(f"{vocab_path}: missing vocabulary")
    vocab = vocab_path.read_text().splitlines()
    declared = manifest.get("vocab_size")
    if declared is not None and int(declared) != len(vocab):
        raise ParseError(f"{vocab_path}: {len(vocab)} entries, manifest says {declared}")

    features: dict[str, np.ndarray] = {}
    for video_id in video_ids:
        features[video_id] = read_features(root / "features" / f"{video_id}.feat")

    ann_path = root / "annotations.tsv"
    if not ann_path.exists():
        raise ParseError(f"{ann_path}: missing annotations")
    queries: list[QueryRecord] = []
    gts: dict[str, Segment] = {}
    for lineno, raw in enumerate(ann_path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 5:
            raise ParseError(f"{ann_path}:{lineno}: expected 5 tab-separated fields")
        video_id, token_text, start_text, end_text, split = parts
        if video_id not in features:
            raise ParseError(f"{ann_path}:{lineno}: unknown video id {video_id!r}")
        if split not in SPLITS:
            raise ParseError(f"{ann_path}:{lineno}: bad split tag {split!r}")
        try:
            tokens = [int(t) for t in token_text.split()]
            start, end = int(start_text), int(end_text)
        except ValueError as exc:
            raise ParseError(f"{ann_path}:{lineno}: {exc}") from exc
        if not tokens:
            raise ParseError(f"{ann_path}:{lineno}: empty token sequence")
        if any(not 0 <= t < len(vocab) for t in tokens):
            raise ParseError(f"{ann_path}:{lineno}: token id outside vocabulary")
        frames = features[video_id].shape[0]
        if not 0 <= start <= end < frames:
            raise ParseError(
                f"{ann_path}:{lineno}: segment [{start}, {end}] outside video of {frames} frames"
            )
        gt = Segment(start, end)
        gts[video_id] = gt
        queries.append(QueryRecord(video_id=video_id, tokens=tokens, gt=gt, split=split))

    videos = {
        vid: VideoRecord(video_id=vid, features=feat, gt=gts.get(vid))
        for vid, feat in features.items()
    }
    return Corpus(videos=videos, queries=queries, vocab=vocab, manifest=manifest)


@dataclass
class Batch:
    """Aligned (video, sentence) pairs; negatives for pair i are every
    other in-batch index."""

    queries: list[TrainQuery]

    def __len__(self) -> int:
        return len(self.queries)

    def negatives(self, i: int) -> list[int]:
        return [j for j in range(len(self.queries)) if j != i]


def make_batches(
    queries: Sequence[TrainQuery], batch_size: int, epoch_seed: int
) -> list[Batch]:
    """Shuffle and chunk; a trailing chunk keeps at least two pairs or is
    dropped (in-batch negatives need a counterpart)."""
    if batch_size < 2:
        raise ConfigError(f"batch size must be at least 2, got {batch_size}")
    order = np.random.default_rng(epoch_seed).permutation(len(queries))
    batches: list[Batch] = []
    for lo in range(0, len(order), batch_size):
        chunk = [queries[int(j)] for j in order[lo : lo + batch_size]]
        if len(chunk) >= 2:
            batches.append(Batch(queries=chunk))
    return batches
