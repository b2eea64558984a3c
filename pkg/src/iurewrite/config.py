"""Run configuration and its flat ``key: value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import yaml

from .encoder import EncoderConfig
from .heads import MergeMode


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # encoder
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    dropout: float = 0.0
    # heads
    d_hidden: int = 64
    d_int: int = 16
    unet_channels: int = 32
    merge_alpha: float = 0.5
    tau: float = 0.5
    # objective
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 0.5
    class_weights: tuple = (1.0, 5.0, 5.0)
    n_negatives: int = 3
    # optimisation
    lr: float = 1e-3
    steps: int = 2000
    batch_size: int = 16
    warmup: int = 100
    merge_warmup: int = 300
    ema_decay: float = 0.99
    eval_every: int = 200
    seed: int = 0
    dtype: str = "float32"
    # data
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    # module switches: context selection, context matching, soft mask, hard mask, intention check
    cs: bool = True
    cm: bool = True
    sm: bool = True
    hm: bool = False
    ic: bool = True

    def __post_init__(self):
        self.class_weights = tuple(float(w) for w in self.class_weights)
        self.validate()

    def validate(self) -> None:
        if self.sm and self.hm:
            raise ConfigError("soft mask (sm) and hard mask (hm) are mutually exclusive")
        if (self.cm or self.ic or self.sm or self.hm) and not self.cs:
            raise ConfigError("cm, ic, sm and hm need context selection (cs)")
        if not 0.0 <= self.merge_alpha <= 1.0:
            raise ConfigError("merge_alpha must be in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be in [0, 1]")
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ConfigError("loss weights must be non-negative")
        if len(self.class_weights) != 3 or min(self.class_weights) < 0:
            raise ConfigError("class_weights needs three non-negative values")
        if self.lr <= 0 or self.steps < 0 or self.batch_size < 1 or self.warmup < 0:
            raise ConfigError("invalid optimiser settings")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in [0, 1)")
        if self.merge_warmup < 0:
            raise ConfigError("merge_warmup must be non-negative")
        if self.n_negatives < 0:
            raise ConfigError("n_negatives must be non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")

    @property
    def merge_mode(self) -> MergeMode:
        if not self.cs:
            return MergeMode.OFF
        if self.hm:
            return MergeMode.HARD
        if self.sm:
            return MergeMode.SOFT
        return MergeMode.OFF

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.d_model, self.n_layers, self.n_heads, self.d_ff,
                             self.max_len, self.dropout, self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["class_weights"] = list(self.class_weights)
        return d

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


def load_config(path: str | Path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected 'key: value' lines")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"{path}: nested value for {k!r}; the config is flat")
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False, default_flow_style=None)

