"""Run configuration files (JSON) for the command line."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .embed import EmbedderConfig
from .heads import HeadConfig
from .training import GridSpec, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataPaths:
    train: str
    valid: str
    test: str | None = None


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"
    dataset_name: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def model_name(self) -> str:
        name = f"{self.embedder.conv_type}-{self.head.kind}"
        if self.head.kind == "PointwiseRegression":
            name += f"-{self.train.target_mode}"
        return name


def _build(cls, section: dict, path: str, tuple_fields=()):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object, got {type(section).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in section:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = {k: (tuple(v) if k in tuple_fields else v) for k, v in section.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def run_config_from_dict(doc: dict, base_dir: str | Path = ".", check_files: bool = True) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    if "data" not in doc:
        raise ConfigError("data: missing section")
    base = Path(base_dir)
    data = _build(DataPaths, doc["data"], "data")
    resolved = {}
    for name in ("train", "valid", "test"):
        value = getattr(data, name)
        if value is None:
            resolved[name] = None
            continue
        p = Path(value)
        p = (p if p.is_absolute() else base / p).resolve()
        if check_files and not p.exists():
            raise ConfigError(f"data.{name}: file not found: {p}")
        resolved[name] = str(p)
    data = DataPaths(**resolved)
    extra = set(doc) - {"data", "embedder", "head", "train", "output_dir", "dataset_name"}
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown section")
    cfg = RunConfig(
        data=data,
        embedder=_build(EmbedderConfig, doc.get("embedder", {}), "embedder"),
        head=_build(HeadConfig, doc.get("head", {}), "head"),
        train=_build(TrainConfig, doc.get("train", {}), "train"),
        output_dir=str(doc.get("output_dir", "runs/default")),
        dataset_name=str(doc.get("dataset_name", "")),
    )
    if (cfg.train.target_mode == "pairwise") != cfg.head.pairwise:
        raise ConfigError(f"train.target_mode: {cfg.train.target_mode!r} does not fit head.kind {cfg.head.kind!r}")
    return cfg


def load_run_config(path: str | Path, check_files: bool = True) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return run_config_from_dict(doc, path.parent, check_files)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def load_grid_spec(path: str | Path | None) -> GridSpec:
    if path is None:
        return GridSpec()
    doc = json.loads(Path(path).read_text())
    return _build(GridSpec, doc, "grid", tuple_fields=("widths", "conv_layers", "poolings", "learning_rates"))
