"""Line-oriented ``section.key=value`` run configuration.

Every field of the cohort, data, adapter, encoder, model and training
configs can be set; anything not mentioned keeps its dataclass default. A
single top-level ``seed`` drives the data, init and shuffle substreams.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from .model import ModelConfig
from .report import DEFAULT_MAX_LEN
from .trainer import TrainConfig
from .volume import CohortConfig

# Keys owned by the top-level seed or fixed by the architecture.
_HIDDEN = {"cohort.seed", "train.seed", "adapter.in_channels"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    train_fraction: float = 0.7
    max_len: int = DEFAULT_MAX_LEN


@dataclass
class RunConfig:
    seed: int = 0
    cohort: CohortConfig = field(default_factory=CohortConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def sections(self) -> Dict[str, object]:
        return {
            "cohort": self.cohort,
            "data": self.data,
            "adapter": self.model.adapter,
            "vision": self.model.vision,
            "text": self.model.text,
            "model": self.model,
            "train": self.train,
        }

    def items(self) -> List[Tuple[str, object]]:
        out = [("seed", self.seed)]
        for name, obj in self.sections().items():
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                key = f"{name}.{f.name}"
                if key in _HIDDEN or dataclasses.is_dataclass(value):
                    continue
                out.append((key, value))
        return out

    def keys(self) -> List[str]:
        return [k for k, _ in self.items()]

    def set(self, key: str, raw: str) -> None:
        if key == "seed":
            self.seed = _parse(key, raw, self.seed)
            return
        section, _, name = key.partition(".")
        obj = self.sections().get(section)
        if obj is None or key in _HIDDEN or not name or not hasattr(obj, name):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(obj, name)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(obj, name, _parse(key, raw, current))

    def resolved(self) -> "RunConfig":
        """Push the top-level seed into the substream owners and validate."""
        self.cohort.seed = self.seed
        self.train.seed = self.seed
        try:
            self.train.validate()
            self.model.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 < self.data.train_fraction < 1.0:
            raise ConfigError(f"data.train_fraction must lie in (0, 1), got {self.data.train_fraction}")
        if len(self.cohort.counts) != 3 or min(self.cohort.counts) < 1:
            raise ConfigError(f"cohort.counts needs three positive class counts, got {self.cohort.counts}")
        return self

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.items())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(key: str, raw: str, current):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            kind = type(current[0]) if current else int
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(kind(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(current).__name__}") from None


def parse_config(lines: Iterable[str], base: RunConfig = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {lineno}: expected key=value, got {line.rstrip()!r}")
        key, _, value = text.partition("=")
        cfg.set(key.strip(), value)
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text.splitlines())
