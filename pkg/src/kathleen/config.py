"""Model, training and dataset configuration plus the run-config file format.

Run-config files use INI syntax with three sections::

    [model]
    d = 256
    num_classes = 2

    [train]
    epochs = 20
    seed = 42

    [data]
    train_path = data/imdb/train.csv
    test_path = data/imdb/test.csv

Keys are the dataclass field names below. Unknown sections or keys are
errors. Booleans accept true/false/1/0/yes/no; tuples are comma-separated.
Relative data paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Union


class ConfigError(ValueError):
    """Invalid configuration (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class ModelConfig:
    d: int = 256
    num_classes: int = 2
    # LearnedFreqPattern: damped-sinusoid filter bank
    freq_filters: int = 16
    freq_kernel: int = 32
    # SlidingWindow / FreqBasisExpansion
    window: int = 8
    hop: int = 4
    basis: int = 8
    harmonics: int = 6
    shifts: int = 8
    # reverb
    l_max: int = 256
    extend_positions: bool = False
    chunk: int = 16
    gamma_min: float = 0.50
    gamma_max: float = 0.999
    # sequencer
    conv_kernel: int = 5
    psi_iters: int = 4
    psi_coupling: float = 0.3
    psi_scale: float = 1.0
    epm_eps: float = 1e-6
    dropout: float = 0.10
    # channel / stage toggles
    use_plg: bool = True
    use_phase_shift: bool = True
    use_phase_harmonics: bool = True
    use_reverb: bool = True
    use_conv: bool = True
    use_consonance: bool = True
    use_dissonance: bool = True
    pooling: str = "dual"

    def __post_init__(self) -> None:
        checks = [
            (self.d >= 1, "d must be >= 1"),
            (self.num_classes >= 2, "num_classes must be >= 2"),
            (self.freq_filters >= 1 and self.freq_kernel >= 1, "freq_filters and freq_kernel must be >= 1"),
            (self.window >= 1, "window must be >= 1"),
            (1 <= self.hop <= self.window, "hop must satisfy 1 <= hop <= window"),
            (1 <= self.basis <= self.window, "basis must satisfy 1 <= basis <= window"),
            (self.harmonics >= 0 and self.shifts >= 1, "harmonics >= 0 and shifts >= 1 required"),
            (self.l_max >= 1 and self.chunk >= 1, "l_max and chunk must be >= 1"),
            (0 < self.gamma_min < self.gamma_max <= 1, "need 0 < gamma_min < gamma_max <= 1"),
            (self.conv_kernel % 2 == 1, f"conv_kernel must be odd, got {self.conv_kernel}"),
            (self.psi_iters >= 1 and self.psi_scale > 0, "psi_iters >= 1 and psi_scale > 0 required"),
            (0 <= self.dropout < 1, "dropout must be in [0, 1)"),
            (self.epm_eps > 0, "epm_eps must be positive"),
            (self.pooling in ("dual", "mean"), "pooling must be 'dual' or 'mean'"),
            (
                any((self.use_reverb, self.use_conv, self.use_consonance, self.use_dissonance)),
                "at least one sequencer channel must be enabled",
            ),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    clip_norm: float = 0.0  # 0 disables clipping
    max_len: int = 256
    schedule: str = "cosine"

    def __post_init__(self) -> None:
        if not (self.lr > 0 and self.weight_decay >= 0 and self.adam_eps > 0):
            raise ConfigError("lr and adam_eps must be positive, weight_decay non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.max_len < 1:
            raise ConfigError("epochs, batch_size and max_len must be >= 1")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError("schedule must be 'cosine' or 'constant'")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0")


@dataclass(frozen=True)
class DatasetSpec:
    train_path: str = ""
    test_path: str = ""
    format: str = "auto"  # auto | csv | tsv | jsonl | aclimdb
    text_field: str = "text"
    label_field: str = "label"
    class_names: tuple[str, ...] = ()
    train_limit: int = 0  # 0 keeps every row
    test_limit: int = 0
    subset_seed: int = 0

    def __post_init__(self) -> None:
        if self.format not in ("auto", "csv", "tsv", "jsonl", "aclimdb"):
            raise ConfigError(f"unknown data format {self.format!r}")
        if self.train_limit < 0 or self.test_limit < 0:
            raise ConfigError("train_limit/test_limit must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DatasetSpec = field(default_factory=DatasetSpec)


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DatasetSpec}


def _convert(raw: str, kind: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if typing.get_origin(kind) is tuple:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    raise ConfigError(f"unsupported field type for {key}")


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def build(cls, values: dict[str, str], section: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kwargs = {k: _convert(v, hints[k], f"{section}.{k}") for k, v in values.items()}
    return cls(**kwargs)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    unknown = sorted(set(parser.sections()) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {
        name: build(cls, dict(parser[name]) if parser.has_section(name) else {}, name)
        for name, cls in _SECTIONS.items()
    }
    data = parts["data"]
    base = path.parent
    resolved = {
        key: str(base / getattr(data, key))
        for key in ("train_path", "test_path")
        if getattr(data, key) and not Path(getattr(data, key)).is_absolute()
    }
    if resolved:
        data = dataclasses.replace(data, **resolved)
    return RunConfig(model=parts["model"], train=parts["train"], data=data)


def to_kv_lines(obj, section: str) -> list[str]:
    return [f"{section}.{f.name}={_format(getattr(obj, f.name))}" for f in fields(obj)]


def model_config_to_text(cfg: ModelConfig) -> str:
    return "\n".join(to_kv_lines(cfg, "model")) + "\n"


def model_config_from_text(text: str) -> ModelConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section != "model":
            raise ConfigError(f"bad config line {lineno}: {line!r}")
        values[name] = value
    return build(ModelConfig, values, "model")


def defaults_text() -> str:
    """Every default, in run-config file syntax."""
    out = []
    for name, cls in _SECTIONS.items():
        out.append(f"[{name}]")
        obj = cls()
        out.extend(f"{f.name} = {_format(getattr(obj, f.name))}" for f in fields(obj))
        out.append("")
    return "\n".join(out)
