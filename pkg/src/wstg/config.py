"""Training/inference configuration and the key=value config file format.

A config file holds one ``key=value`` pair per line (``#`` starts a
comment).  Values may be integers, floats, simple fractions like ``1/6``,
or comma-separated lists of those.  Command-line overrides are applied on
top of the file and win.  The same file also carries the synthetic-corpus
keys consumed by ``generate-data``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .dataset import CorpusSpec
from .errors import ConfigError
from .grouping import DEFAULT_THRESHOLDS
from .proposals import DEFAULT_OVERLAP, DEFAULT_SCALE_FRACTIONS


@dataclass
class TrainConfig:
    hidden_size: int = 512
    embed_dim: int = 300
    lr: float = 1e-3
    coarse_epochs: int = 100
    fine_epochs: int = 100
    batch_size: int = 16
    expand_rate: float = 1.8
    window_fractions: tuple[float, ...] = DEFAULT_SCALE_FRACTIONS
    overlap: float = DEFAULT_OVERLAP
    margin: float = 1.0
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    eval_etas: tuple[float, ...] = (0.1, 0.3, 0.5)
    seed: int = 0
    grad_clip: float = 5.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # Derived from the training split when absent; pinned in checkpoints so
    # inference regenerates the same proposals.
    avg_train_length: float | None = None

    def validate(self) -> "TrainConfig":
        positive = ["hidden_size", "embed_dim", "coarse_epochs", "fine_epochs",
                    "batch_size", "margin", "grad_clip", "adam_eps"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 for in-batch negatives")
        if not 0 <= self.overlap < 1:
            raise ConfigError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.expand_rate < 0:
            raise ConfigError(f"expand_rate must be nonnegative, got {self.expand_rate}")
        if not self.window_fractions or not all(0 < f <= 1 for f in self.window_fractions):
            raise ConfigError("window_fractions must lie in (0, 1]")
        if not self.thresholds or not all(0 < t < 1 for t in self.thresholds):
            raise ConfigError("thresholds must lie in (0, 1)")
        if not self.eval_etas:
            raise ConfigError("eval_etas must be nonempty")
        if not all(0.0 <= self.adam_beta1 < 1 and 0.0 <= self.adam_beta2 < 1
                   for _ in (0,)):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.avg_train_length is not None and self.avg_train_length <= 0:
            raise ConfigError("avg_train_length must be positive when given")
        return self


CORPUS_KEYS = {
    "n_videos": int,
    "feature_dim": int,
    "vocab_size": int,
    "t_min": int,
    "t_max": int,
    "data_seed": int,
    "test_fraction": float,
    "sigma_inside": float,
    "sigma_outside": float,
    "concept_scale": float,
}


def _parse_scalar(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def _coerce(key: str, text: str, kind) -> object:
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return _parse_scalar(text)
        if kind == "float_tuple":
            return tuple(_parse_scalar(part) for part in text.split(",") if part.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from exc
    raise ConfigError(f"unhandled kind for {key}")


_FIELD_KINDS = {
    "hidden_size": int, "embed_dim": int, "coarse_epochs": int, "fine_epochs": int,
    "batch_size": int, "seed": int,
    "lr": float, "expand_rate": float, "overlap": float, "margin": float,
    "grad_clip": float, "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
    "avg_train_length": float,
    "window_fractions": "float_tuple", "thresholds": "float_tuple",
    "eval_etas": "float_tuple",
}


def read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def build_train_config(values: dict[str, str]) -> TrainConfig:
    """Build a TrainConfig from string values; unknown keys (other than
    corpus keys) are rejected."""
    config = TrainConfig()
    for key, text in values.items():
        if key in CORPUS_KEYS:
            continue
        if key not in _FIELD_KINDS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, _coerce(key, text, _FIELD_KINDS[key]))
    return config.validate()


def build_corpus_spec(values: dict[str, str]) -> CorpusSpec:
    spec = CorpusSpec()
    for key, kind in CORPUS_KEYS.items():
        if key in values:
            target = "seed" if key == "data_seed" else key
            setattr(spec, target, _coerce(key, values[key], kind))
    return spec.validate()


def config_to_text(config: TrainConfig) -> str:
    """Canonical serialization (sorted keys, repr floats); used for the
    checkpoint snapshot."""
    lines = []
    for f in sorted(fields(config), key=lambda f: f.name):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            text = ",".join(repr(v) for v in value)
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    values: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key] = value
    return build_train_config(values)
