"""Run configuration: one flat record shared by the model, trainer and CLI.

Config files are flat JSON objects whose keys mirror the CLI flags
one-to-one (dashes and underscores are interchangeable); flag values win
over file values, and the effective config is echoed into every output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ParseError, ValidationError


@dataclass
class TrainConfig:
    # model dimensions
    d: int = 50            # node state size
    de: int = 32           # edge embedding size
    dp: int = 64           # graph representation size
    layers: int = 3        # message passing layers (m)
    span: int = 3          # days per sample (T)
    # message passing ablation / linearity knobs
    use_homogeneous: bool = True
    use_heterogeneous: bool = True
    linear_layers: bool = False
    # optimization
    lam: float = 0.1       # node-variance loss trade-off
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    patience: int = 5
    val_fraction: float = 0.1
    # protocols
    splits: int = 10
    knn_k: int = 3
    day_origin: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda {self.lam} must be >= 0")
        if self.splits < 2:
            raise ValidationError(f"split count {self.splits} must be >= 2")
        for name in ("d", "de", "dp", "span", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.layers < 0:
            raise ValidationError("layers must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "TrainConfig":
        merged = self.to_dict()
        merged.update(kw)
        return TrainConfig(**merged)


_ALIASES = {"lambda": "lam", "m": "layers", "d_e": "de", "d_p": "dp"}


def _normalize_key(key: str) -> str:
    key = key.replace("-", "_")
    return _ALIASES.get(key, key)


def config_from_dict(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    merged = (base or TrainConfig()).to_dict()
    for key, value in values.items():
        name = _normalize_key(key)
        if name == "format":
            continue
        if name not in known:
            raise ValidationError(f"unknown config key {key!r}")
        merged[name] = value
    return TrainConfig(**merged)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"config file is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("config file must hold a JSON object")
    return config_from_dict(doc, base)


def save_config(config: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
