"""Run configuration: YAML/JSON file, dotted overrides, resolved echo."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    path: str | None = None
    format: str = "csv"
    delimiter: str | None = None
    header: bool = False
    user_col: int | str = 0
    item_col: int | str = 1
    rating_col: int | str | None = 2
    rating_threshold: float = 4.0
    min_user_interactions: int = 20
    split_ratios: list[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])
    max_malformed: float = 0.01
    # prepared dataset; defaults to <out>/dataset.npz
    dataset: str | None = None


@dataclass
class ModelSection:
    latent_dim: int = 80
    hidden: list[int] = field(default_factory=lambda: [320, 320])
    alpha: float = 0.01
    beta: float = 0.01
    margin: float = 0.15
    mode: str = "jova_hinge"


@dataclass
class TrainSection:
    lr: float = 0.003
    epochs: int = 200
    patience: int = 10
    block_users: int = 1500
    block_items: int = 1500
    eval_k: int = 10


@dataclass
class EvalSection:
    ks: list[int] = field(default_factory=lambda: [1, 5, 10])
    split: str = "test"
    idcg: str = "full"
    cold_start_grid: list[Any] = field(default_factory=lambda: [10, 20, 40, 80, 160, "inf"])
    per_user: bool = False

    def grid(self) -> list[float]:
        return [math.inf if str(g).lower() in ("inf", "infinity") else float(g) for g in self.cold_start_grid]


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict | None) -> "RunConfig":
        raw = dict(raw or {})
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key not in sections:
                raise ConfigError(f"unknown config key {key!r}")
            sub = _SECTIONS.get(key)
            if sub is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            known = {f.name for f in dataclasses.fields(sub)}
            extra = set(value) - known
            if extra:
                raise ConfigError(f"unknown keys in section {key!r}: {sorted(extra)}")
            kwargs[key] = sub(**value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_dict(yaml.safe_load(path.read_text()) or {})

    def override(self, assignments: list[str]) -> "RunConfig":
        """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
        raw = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, text = item.split("=", 1)
            parts = key.strip().split(".")
            node = raw
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section in {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = yaml.safe_load(text)
        return RunConfig.from_dict(raw)

    def dataset_path(self) -> Path:
        return Path(self.data.dataset) if self.data.dataset else Path(self.out) / "dataset.npz"


_SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection, "eval": EvalSection}
