"""Plain-text ``key = value`` run configuration with flag overrides."""
from __future__ import annotations

import os
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .model import ModelConfig, preset, reduced_blocks
from .training import TrainConfig

DATA_ENV = "HFGCN_DATA_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model
    preset: str = "full"
    num_classes: int = 60
    num_persons: int = 2
    window: int = 64
    reduction: int = 8
    attention: str = ""
    gcn: str = ""
    hypergraphs: str = ""
    ham_mode: str = "per-branch"
    xi_input: str = "hx"
    blocks: str = ""
    depth: int = 0
    width: int = 64
    model_seed: int = 0
    # training
    epochs: int = 120
    momentum: float = 0.9
    weight_decay: float = 0.0004
    base_lr: float = 0.1
    warmup_epochs: int = 5
    milestones: str = "60,90"
    decay: float = 0.1
    label_smooth: float = 0.1
    batch_size: int = 128
    seed: int = 0
    stop_at: float = 0.0
    # data
    modality: str = "joint"
    data_dir: str = ""
    train_data: str = ""
    test_data: str = ""
    synth_classes: int = 0
    synth_per_class: int = 8
    synth_test_per_class: int = 8
    synth_noise: float = 0.0
    synth_seed: int = 7
    synth_test_seed: int = 8
    # output
    out_dir: str = "runs/default"
    threads: int = 1

    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir or os.environ.get(DATA_ENV, "."))

    def data_path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.resolved_data_dir() / p

    def model_config(self) -> ModelConfig:
        over = {"num_classes": self.num_classes, "num_persons": self.num_persons,
                "window": self.window, "reduction": self.reduction,
                "ham_mode": self.ham_mode, "xi_input": self.xi_input}
        if self.attention:
            over["attention"] = self.attention
        if self.gcn:
            over["gcn"] = self.gcn
        if self.hypergraphs:
            over["hypergraphs"] = tuple(h.strip() for h in self.hypergraphs.split(",") if h.strip())
        if self.blocks:
            over["blocks"] = parse_blocks(self.blocks)
        elif self.depth:
            over["blocks"] = reduced_blocks(self.depth, self.width)
        try:
            return preset(self.preset, **over)
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from None

    def train_config(self) -> TrainConfig:
        try:
            ms = tuple(int(m) for m in self.milestones.split(",") if m.strip())
            return TrainConfig(self.epochs, self.momentum, self.weight_decay, self.base_lr,
                               self.warmup_epochs, ms, self.decay, self.label_smooth,
                               self.batch_size, self.seed)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def validate(self) -> "RunConfig":
        from .data import MODALITIES
        if self.modality not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0.0 <= self.stop_at <= 1.0:
            raise ConfigError("stop_at must lie in [0, 1]")
        self.model_config()
        self.train_config()
        return self

    def dump(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def parse_blocks(text: str) -> tuple:
    """``3:64:1, 64:64:1, ...`` -> ((3, 64, 1), (64, 64, 1), ...)."""
    try:
        table = tuple(tuple(int(v) for v in item.split(":")) for item in text.split(",") if item.strip())
    except ValueError:
        raise ConfigError(f"bad block table {text!r}") from None
    if not table or any(len(b) != 3 for b in table):
        raise ConfigError(f"bad block table {text!r}; want cin:cout:stride entries")
    return table


_TYPES = {f.name: typing.get_type_hints(RunConfig)[f.name] for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind is bool:
            return raw.lower() in ("1", "true", "yes")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = _convert(key, val)
    return out


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, val in (overrides or {}).items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if val is not None:
            values[key] = _convert(key, str(val)) if isinstance(val, str) else val
    return RunConfig(**values).validate()
