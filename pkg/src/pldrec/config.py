"""Experiment configuration stored as sectioned INI files.

Every section maps onto a dataclass; unknown sections or keys are rejected
before any work starts. List values are comma separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSection:
    name: str = "experiment"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "results"


@dataclass
class DatasetSection:
    # "synthetic" or "file"
    source: str = "synthetic"
    path: str = ""
    num_users: int = 500
    num_items: int = 500
    latent_dim: int = 8
    per_user: int = 40
    min_count: int = 1
    train_frac: float = 0.8
    val_frac: float = 0.1
    # "none", "ratio" or "per_user"
    noise_mode: str = "ratio"
    noise_level: float = 0.3


@dataclass
class ModelSection:
    dim: int = 64
    layers: int = 0


@dataclass
class TrainSection:
    loss: str = "bpr"
    denoiser: str = "none"
    k: int = 5
    tau: float = 0.1
    learning_rate: float = 0.05
    weight_decay: float = 0.001
    batch_size: int = 1024
    max_epochs: int = 200
    # 0 disables early stopping
    patience: int = 10
    rce_beta: float = 1.0
    tce_max_drop_rate: float = 0.2
    tce_ramp_epochs: int = 10


@dataclass
class EvalSection:
    k_values: list = field(default_factory=lambda: [20, 50])


@dataclass
class TheorySection:
    n: list = field(default_factory=lambda: [20, 50, 100])
    m: list = field(default_factory=lambda: [2, 5, 10])
    mu1: list = field(default_factory=lambda: [1.0])
    delta: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    sigma: list = field(default_factory=lambda: [0.2, 0.5])
    k: list = field(default_factory=lambda: [1, 3, 5, 10])
    tau: list = field(default_factory=lambda: [0.5, 1.0])
    trials: int = 100_000


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    theory: TheorySection = field(default_factory=TheorySection)

    def validate(self):
        d, t = self.dataset, self.train
        if d.source not in ("synthetic", "file"):
            raise ConfigError(f"dataset.source must be 'synthetic' or 'file', got {d.source!r}")
        if d.source == "file" and not d.path:
            raise ConfigError("dataset.path is required when dataset.source = file")
        if d.noise_mode not in ("none", "ratio", "per_user"):
            raise ConfigError(f"dataset.noise_mode must be none|ratio|per_user, got {d.noise_mode!r}")
        if not 0 < d.train_frac < 1 or not 0 <= d.val_frac < 1:
            raise ConfigError("dataset.train_frac must be in (0,1) and val_frac in [0,1)")
        if t.loss not in ("bpr", "bce"):
            raise ConfigError(f"train.loss must be bpr|bce, got {t.loss!r}")
        if t.denoiser not in ("none", "pld", "rce", "tce"):
            raise ConfigError(f"train.denoiser must be none|pld|rce|tce, got {t.denoiser!r}")
        if t.k < 1 or t.tau <= 0:
            raise ConfigError("train.k must be >= 1 and train.tau > 0")
        if t.learning_rate < 0 or t.batch_size < 1:
            raise ConfigError("train.learning_rate must be >= 0 and batch_size >= 1")
        if self.model.dim < 1 or self.model.layers < 0:
            raise ConfigError("model.dim must be >= 1 and model.layers >= 0")
        if not self.experiment.seeds:
            raise ConfigError("experiment.seeds must list at least one seed")
        if any(k < 1 for k in self.eval.k_values):
            raise ConfigError("eval.k_values must be positive")
        return self


_SECTIONS = {f.name: f.type for f in fields(ExperimentConfig)}


def _section_types(section_cls) -> dict[str, type]:
    hints = typing.get_type_hints(section_cls)
    return {f.name: hints[f.name] for f in fields(section_cls)}


def _parse_value(raw: str, typ, default):
    raw = raw.strip()
    try:
        if typ is list:
            elem = type(default[0]) if default else float
            return [elem(x.strip()) for x in raw.split(",") if x.strip()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from exc


def _format_value(value) -> str:
    if isinstance(value, list):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ExperimentConfig()
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(cfg, name)
        types = _section_types(type(section))
        for key, raw in cp.items(name):
            if key not in types:
                raise ConfigError(f"unknown key '{key}' in [{name}]")
            try:
                setattr(section, key, _parse_value(raw, types[key], getattr(section, key)))
            except ConfigError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name in _SECTIONS:
        cp[name] = {k: _format_value(v) for k, v in dataclasses.asdict(getattr(cfg, name)).items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def describe_defaults() -> str:
    """Human-readable listing of every section, key and default value."""
    lines = []
    cfg = ExperimentConfig()
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for k, v in dataclasses.asdict(getattr(cfg, name)).items():
            lines.append(f"  {k} = {_format_value(v)}")
    return "\n".join(lines)
