"""JSON experiment configuration.

Example::

    {
      "format_version": 1,
      "dataset": {"synth": {"n_per_class": 300, "d": 16, "n_classes": 3,
                            "separation": 6.0, "seed": 0}},
      "split": {"fractions": [0.6, 0.2, 0.2], "seed": 0},
      "model": {"hidden_dims": [64, 64], "output_dim": 32, "activation": "relu"},
      "weights": {"euclidean": 0.25, "cosine": 0.25, "chebyshev": 0.25, "wasserstein": 0.25},
      "train": {"epochs": 100, "n_episodes": 50, "support_size": 5, "query_size": 5,
                "n_train_samples": 200, "ema": {"enabled": true, "beta": 0.99},
                "learning_rate": 0.001, "clip_norm": 1.0, "patience": 10},
      "seeds": [0, 1, 2],
      "output_dir": "runs/demo",
      "plots": true,
      "workers": 1
    }

A CSV source replaces ``synth`` with ``{"csv": "flows.csv", "schema": "flows.schema.json"}``
(the schema may also be given inline as an object). Relative paths resolve
against the directory holding the config file.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataio import DatasetSchema, load_schema
from .embedder import Architecture
from .errors import ConfigError, MsplError
from .metric_spaces import MetricWeights
from .trainer import TrainConfig

CONFIG_FORMAT_VERSION = 1

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"arch", "weights", "seed", "ema_enabled", "ema_beta"}


@dataclass(frozen=True)
class SynthSource:
    n_per_class: int = 300
    d: int = 16
    n_classes: int = 3
    separation: float = 6.0
    seed: int = 0
    kind: str = "gaussian"


@dataclass(frozen=True)
class CsvSource:
    path: Path
    schema: DatasetSchema


@dataclass(frozen=True)
class ExperimentConfig:
    source: SynthSource | CsvSource
    fractions: tuple[float, float, float]
    split_seed: int
    model: dict
    weights: MetricWeights
    train: dict
    seeds: tuple[int, ...]
    output_dir: Path
    plots: bool = True
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False)

    def train_config(self, input_dim: int, seed: int, weights: MetricWeights | None = None) -> TrainConfig:
        arch = Architecture(input_dim, **self.model)
        return TrainConfig(arch=arch, weights=weights or self.weights, seed=seed, **self.train)


def _require(cond, msg, field_name=None):
    if not cond:
        raise ConfigError(msg, field=field_name)


def parse_config(doc: dict, base_dir=".") -> ExperimentConfig:
    base_dir = Path(base_dir)
    _require(isinstance(doc, dict), "config must be a JSON object")
    version = doc.get("format_version", CONFIG_FORMAT_VERSION)
    _require(version == CONFIG_FORMAT_VERSION, f"unsupported config format_version {version!r}",
             "format_version")

    ds = doc.get("dataset")
    _require(isinstance(ds, dict) and (("synth" in ds) ^ ("csv" in ds)),
             "dataset must contain exactly one of 'synth' or 'csv'", "dataset")
    if "synth" in ds:
        try:
            source = SynthSource(**ds["synth"])
        except TypeError as e:
            raise ConfigError(f"bad synth parameters: {e}", "dataset.synth") from None
        _require(source.n_per_class >= 1 and source.d >= 2 and source.n_classes >= 2
                 and source.separation >= 0, "synth needs n_per_class>=1, d>=2, n_classes>=2, "
                 "separation>=0", "dataset.synth")
        _require(source.kind in ("gaussian", "anisotropic"), "synth kind must be gaussian or anisotropic",
                 "dataset.synth.kind")
    else:
        path = base_dir / ds["csv"]
        _require(path.exists(), f"dataset file not found: {path}", "dataset.csv")
        schema = ds.get("schema")
        _require(schema is not None, "csv dataset needs a schema", "dataset.schema")
        try:
            if isinstance(schema, dict):
                schema = DatasetSchema.from_dict(schema)
            else:
                spath = base_dir / schema
                _require(spath.exists(), f"schema file not found: {spath}", "dataset.schema")
                schema = load_schema(spath)
        except MsplError as e:
            raise ConfigError(f"DatasetSchema invalid: {e}", "dataset.schema") from None
        source = CsvSource(path, schema)

    sp = doc.get("split", {})
    fractions = tuple(float(f) for f in sp.get("fractions", (0.6, 0.2, 0.2)))
    _require(len(fractions) == 3 and min(fractions) >= 0 and abs(sum(fractions) - 1) <= 1e-9,
             f"split fractions must be three non-negative reals summing to 1, got {list(fractions)}",
             "split.fractions")

    model = dict(doc.get("model", {}))
    unknown = set(model) - {"hidden_dims", "output_dim", "activation"}
    _require(not unknown, f"unknown model keys {sorted(unknown)}", "model")
    if "hidden_dims" in model:
        model["hidden_dims"] = tuple(model["hidden_dims"])
    try:
        Architecture(2, **model)
    except ValueError as e:
        raise ConfigError(f"Architecture invalid: {e}", "model") from None

    try:
        weights = MetricWeights.from_dict(doc.get("weights", MetricWeights().as_dict()))
    except MsplError as e:
        raise ConfigError(str(e), "weights") from None

    train = dict(doc.get("train", {}))
    ema = train.pop("ema", {})
    unknown = set(train) - _TRAIN_KEYS
    _require(not unknown, f"unknown train keys {sorted(unknown)}", "train")
    train["ema_enabled"] = bool(ema.get("enabled", True))
    train["ema_beta"] = float(ema.get("beta", 0.99))
    _require(0.0 <= train["ema_beta"] < 1.0, "EMA beta must be in [0, 1)", "train.ema.beta")

    seeds = doc.get("seeds", [0])
    _require(isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
             "seeds must be a non-empty list of integers", "seeds")

    cfg = ExperimentConfig(
        source=source,
        fractions=fractions,
        split_seed=int(sp.get("seed", 0)),
        model=model,
        weights=weights,
        train=train,
        seeds=tuple(seeds),
        output_dir=base_dir / doc.get("output_dir", "runs"),
        plots=bool(doc.get("plots", True)),
        workers=int(doc.get("workers", 1)),
        raw=doc,
    )
    try:  # surface TrainConfig range errors at load time
        cfg.train_config(2, 0)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"TrainConfig invalid: {e}", "train") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", "config")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}", "config") from None
    return parse_config(doc, path.parent)
