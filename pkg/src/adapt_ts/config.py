"""Run configuration: dataclasses, presets and the INI-style config file.

Config files use one section per group::

    [model]
    d_model = 128
    [train]
    base_lr = 5e-4
    [mask]
    mask_ratio = 0.15

Precedence is preset < file < explicit overrides < ``ADAPT_SEED``.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .augment import NoiseConfig, SpanMaskConfig
from .errors import FormatError, ValidationError
from .model import ModelConfig

MODES = ("pretrain", "finetune", "finetune_lc")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "pretrain"
    base_lr: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    eps: float = 1e-8
    epochs: int = 1000
    warmup_epochs: int = 40
    clip_max_norm: float = 1.0
    batch_size: int = 1024
    seed: int = 0
    # one masked count for both loss terms instead of one per domain
    shared_n: bool = False
    # reconstruct the noised pooled values instead of the clean ones
    noisy_targets: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValidationError("epochs and warmup_epochs must be >= 0")
        if self.epochs and self.warmup_epochs >= self.epochs:
            raise ValidationError(f"warmup_epochs={self.warmup_epochs} must be < epochs={self.epochs}")
        if self.clip_max_norm <= 0:
            raise ValidationError(f"clip_max_norm must be > 0, got {self.clip_max_norm}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr < 0:
            raise ValidationError(f"base_lr must be >= 0, got {self.base_lr}")


@dataclass(frozen=True)
class DataConfig:
    # "pool" = adaptive pooling, "truncate" = first channel cut/padded to seq_len
    method: str = "pool"
    zscore_spectrum: bool = False
    balance_datasets: bool = False
    threads: int = 0

    def __post_init__(self) -> None:
        if self.method not in ("pool", "truncate"):
            raise ValidationError(f"data.method must be 'pool' or 'truncate', got {self.method!r}")
        if self.threads < 0:
            raise ValidationError("threads must be >= 0")


@dataclass(frozen=True)
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    mask: SpanMaskConfig = field(default_factory=SpanMaskConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def replace(self, **sections: Mapping[str, Any]) -> "Config":
        """Copy with per-section field overrides, e.g. ``cfg.replace(train={"epochs": 5})``."""
        updated = {}
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ValidationError(f"unknown config section {name!r}")
            current = getattr(self, name)
            known = {f.name for f in dataclasses.fields(current)}
            unknown = set(values) - known
            if unknown:
                raise ValidationError(f"unknown keys in [{name}]: {sorted(unknown)}")
            updated[name] = dataclasses.replace(current, **values)
        return dataclasses.replace(self, **updated)


SECTIONS = ("model", "train", "noise", "mask", "data")


def full_pretrain() -> Config:
    """Full-scale pretraining settings (6 x 128 encoder, 256 x 32 inputs, batch 1024, 1000 epochs)."""
    return Config()


def desk_pretrain() -> Config:
    """Small settings that pretrain on a few hundred samples in well under a minute on one core.

    The spectrum is z-scored per channel: at this scale the raw magnitudes
    (divided by the series length) are too small for the model to use.
    """
    return Config(
        model=ModelConfig(seq_len=64, c_in=8, d_model=32, n_layers=2, n_heads=4, ffn_dim=128),
        train=TrainConfig(base_lr=2e-3, epochs=50, warmup_epochs=5, batch_size=32),
        data=DataConfig(zscore_spectrum=True),
    )


def desk_finetune() -> Config:
    """Fine-tuning counterpart of ``desk_pretrain``: dropout and input noise against overfitting a small set."""
    return desk_pretrain().replace(
        model={"dropout": 0.1},
        train={"mode": "finetune", "base_lr": 1e-3, "epochs": 50, "warmup_epochs": 0},
        noise={"enabled_finetune": True},
    )


# (batch size, learning rate, epochs, linear-classifier-only)
FINETUNE_PRESETS = {
    "emg": (32, 4e-4, 5, False),
    "fd-b": (32, 4e-4, 50, False),
    "gesture": (32, 1e-4, 50, False),
    "epilepsy": (32, 1e-3, 15, True),
    "ucr-uea": (32, 1e-4, 200, False),
}


def finetune_preset(name: str, base: Config | None = None) -> Config:
    try:
        batch, lr, epochs, lc = FINETUNE_PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown finetune preset {name!r}; choose from {sorted(FINETUNE_PRESETS)}") from None
    base = base or Config()
    return base.replace(
        train={
            "mode": "finetune_lc" if lc else "finetune",
            "batch_size": batch,
            "base_lr": lr,
            "epochs": epochs,
            "warmup_epochs": 0,
        }
    )


PRESETS = {"full": full_pretrain, "desk": desk_pretrain, "desk-finetune": desk_finetune}


def _coerce(value: str, default: Any, key: str) -> Any:
    value = value.strip()
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(float(v) for v in value.strip("()[] ").split(","))
        if default is None:
            return None if value.lower() in ("", "none", "null") else int(value)
    except ValueError:
        raise ValidationError(f"cannot parse {key} = {value!r}") from None
    return value


def apply_overrides(cfg: Config, overrides: Mapping[str, str]) -> Config:
    """Apply ``{"section.key": "text value"}`` overrides with type coercion from the current values."""
    grouped: dict[str, dict[str, Any]] = {}
    for dotted, text in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ValidationError(f"override {dotted!r} is not of the form <section>.<key>")
        current = getattr(cfg, section)
        if not hasattr(current, key):
            raise ValidationError(f"unknown key {key!r} in [{section}]")
        grouped.setdefault(section, {})[key] = _coerce(str(text), getattr(current, key), dotted)
    return cfg.replace(**grouped)


def load_config(
    path: str | Path | None = None,
    preset: str = "full",
    overrides: Mapping[str, str] | None = None,
    env=None,
    defaults: Mapping[str, str] | None = None,
) -> Config:
    """Preset, then ``defaults`` (caller-level, e.g. per CLI verb), file, overrides, ``ADAPT_SEED``."""
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[preset]()
    if defaults:
        cfg = apply_overrides(cfg, defaults)
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise FormatError(f"{path}: {exc}") from exc
        flat = {}
        for section in parser.sections():
            if section not in SECTIONS:
                raise ValidationError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                flat[f"{section}.{key}"] = value
        cfg = apply_overrides(cfg, flat)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    env = os.environ if env is None else env
    if env.get("ADAPT_SEED"):
        cfg = apply_overrides(cfg, {"train.seed": env["ADAPT_SEED"]})
    return cfg


def dump_config(cfg: Config) -> str:
    """INI text that ``load_config`` reads back to an equal config."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, (tuple, list)):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
