"""Loading, cleaning, standardizing and splitting tabular flow datasets."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadFractions,
    EmptyDataset,
    InsufficientSamples,
    MissingColumn,
    SchemaError,
    UnknownLabel,
)

log = logging.getLogger(__name__)

FEATURE_EPS = 1e-8
MULTILABEL_SEP = ";"
SCHEMA_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetSchema:
    feature_columns: tuple[str, ...]
    label_column: str
    class_names: tuple[str, ...]
    label_mode: str = "multiclass"

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if not self.feature_columns:
            raise SchemaError("feature_columns must be non-empty")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise SchemaError("feature_columns must be unique")
        if len(set(self.class_names)) != len(self.class_names):
            raise SchemaError("class_names must be unique")
        if len(self.class_names) < 2:
            raise SchemaError("need at least 2 classes")
        if self.label_mode not in ("multiclass", "multilabel"):
            raise SchemaError(f"label_mode must be multiclass or multilabel, got {self.label_mode!r}")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> dict:
        return {
            "format_version": SCHEMA_FORMAT_VERSION,
            "feature_columns": list(self.feature_columns),
            "label_column": self.label_column,
            "label_mode": self.label_mode,
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            return cls(
                feature_columns=d["feature_columns"],
                label_column=d["label_column"],
                class_names=d["class_names"],
                label_mode=d.get("label_mode", "multiclass"),
            )
        except KeyError as e:
            raise SchemaError(f"schema missing field {e.args[0]!r}") from None


def load_schema(path) -> DatasetSchema:
    with open(path, encoding="utf-8") as fh:
        return DatasetSchema.from_dict(json.load(fh))


def save_schema(schema: DatasetSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (N x d), binary label matrix (N x C) and schema.

    ``index`` holds the row ids of the source dataset so that subsets made by
    sampling and splitting can be traced back (and checked for disjointness).
    """

    features: np.ndarray
    labels: np.ndarray
    schema: DatasetSchema
    index: np.ndarray = field(default=None)
    n_dropped: int = 0

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", np.arange(len(self.features)))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def primary_labels(self) -> np.ndarray:
        """Class id per row; for multilabel rows the first active label."""
        return np.argmax(self.labels, axis=1)

    def class_rows(self) -> list[np.ndarray]:
        y = self.primary_labels()
        return [np.flatnonzero(y == k) for k in range(self.n_classes)]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, features=self.features[rows], labels=self.labels[rows],
                       index=self.index[rows], n_dropped=0)


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Read a CSV of flow records.

    Rows whose feature cells do not parse to finite floats are dropped; the
    count is kept on the returned dataset and logged.
    """
    path = Path(path)
    class_idx = {name: i for i, name in enumerate(schema.class_names)}
    feats, labels = [], []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path} has no header") from None
        pos = {name: i for i, name in enumerate(header)}
        for col in (*schema.feature_columns, schema.label_column):
            if col not in pos:
                raise MissingColumn(col)
        fcols = [pos[c] for c in schema.feature_columns]
        lcol = pos[schema.label_column]
        for row in reader:
            if not row:
                continue
            y = np.zeros(schema.n_classes)
            raw = row[lcol].strip()
            names = raw.split(MULTILABEL_SEP) if schema.label_mode == "multilabel" else [raw]
            for name in names:
                name = name.strip()
                if not name:
                    continue
                if name not in class_idx:
                    raise UnknownLabel(name)
                y[class_idx[name]] = 1.0
            if y.sum() < 1:
                raise UnknownLabel(raw)
            try:
                x = [float(row[j]) for j in fcols]
            except (ValueError, IndexError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in x):
                dropped += 1
                continue
            feats.append(x)
            labels.append(y)
    if dropped:
        log.info("dropped %d rows with non-finite features from %s", dropped, path)
    if not feats:
        raise EmptyDataset(f"no usable rows in {path}")
    return Dataset(np.asarray(feats, dtype=np.float64), np.asarray(labels), schema,
                   n_dropped=dropped)


def write_csv(ds: Dataset, path) -> None:
    schema = ds.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*schema.feature_columns, schema.label_column])
        for x, y in zip(ds.features, ds.labels):
            active = [schema.class_names[k] for k in np.flatnonzero(y)]
            w.writerow([repr(float(v)) for v in x] + [MULTILABEL_SEP.join(active)])


def fit_stats(features: np.ndarray, eps: float = FEATURE_EPS) -> FeatureStats:
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), eps)
    return FeatureStats(mean, std)


def standardize(ds: Dataset, stats: FeatureStats | None = None) -> tuple[Dataset, FeatureStats]:
    """Z-score features; fit the statistics on ``ds`` unless ``stats`` is given."""
    if len(ds) == 0:
        raise EmptyDataset()
    if stats is None:
        stats = fit_stats(ds.features)
    z = (ds.features - stats.mean) / stats.std
    return replace(ds, features=z), stats


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative quotas to integers summing to ``total``.

    Leftover units go to the largest fractional parts, ties to the lowest index.
    """
    base = np.floor(quotas + 1e-12).astype(np.int64)
    frac = quotas - base
    short = total - int(base.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(quotas)), -frac))
        base[order[:short]] += 1
    return base


def allocate(counts: Sequence[int], n: int, k_min: int) -> np.ndarray:
    """Per-class sample counts for a stratified draw of ``n`` rows.

    Proportional to class frequency, each class lifted to at least
    min(k_min, class size) and capped at its size. The continuous quota is
    ``clip(lam * count, floor, count)`` with ``lam`` chosen so quotas sum to n;
    it is then rounded by largest remainder.
    """
    counts = np.asarray(counts, dtype=np.int64)
    C, N = len(counts), int(counts.sum())
    if n > N:
        raise InsufficientSamples(f"requested {n} rows from a dataset of {N}")
    if n < C:
        raise InsufficientSamples(f"need at least one row per class: n={n} < C={C}")
    if (counts < 1).any():
        raise InsufficientSamples("every class needs at least one row")
    k_min = max(1, int(k_min))
    # shrink the floor when the budget cannot honour it for every class
    while k_min > 1 and np.minimum(k_min, counts).sum() > n:
        k_min -= 1
    floor = np.minimum(k_min, counts).astype(np.float64)
    cap = counts.astype(np.float64)

    # water-filling: classes pinned at floor or cap drop out, the rest share
    # what is left in proportion to their size
    free = np.ones(C, dtype=bool)
    q = np.zeros(C)
    for _ in range(2 * C + 1):
        fixed_total = q[~free].sum()
        lam = (n - fixed_total) / cap[free].sum()
        q[free] = lam * cap[free]
        low = free & (q < floor)
        high = free & (q > cap)
        if not low.any() and not high.any():
            break
        q[low] = floor[low]
        q[high] = cap[high]
        free &= ~(low | high)
        if not free.any():
            break
    return _largest_remainder(q, n)


def stratified_indices(ds: Dataset, n: int, seed: int, k_min: int = 1) -> np.ndarray:
    """Positions (into ``ds``) of a stratified sample of ``n`` rows, sorted."""
    rows = ds.class_rows()
    alloc = allocate([len(r) for r in rows], n, k_min)
    rng = np.random.default_rng(seed)
    picked = [rng.choice(r, size=a, replace=False) for r, a in zip(rows, alloc)]
    return np.sort(np.concatenate(picked))


def stratified_sample(ds: Dataset, n: int, seed: int, k_min: int = 1) -> Dataset:
    return ds.take(stratified_indices(ds, n, seed, k_min))


def split_indices(ds: Dataset, fractions, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or (fr < 0).any() or abs(fr.sum() - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be three non-negative reals summing to 1, got {list(fractions)}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for rows in ds.class_rows():
        rows = rng.permutation(rows)
        n_tr, n_va, _ = _largest_remainder(fr * len(rows), len(rows))
        parts[0].append(rows[:n_tr])
        parts[1].append(rows[n_tr:n_tr + n_va])
        parts[2].append(rows[n_tr + n_va:])
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


def split(ds: Dataset, fractions, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified train/val/test split; parts are disjoint and cover every row."""
    return tuple(ds.take(ix) for ix in split_indices(ds, fractions, seed))


def synth_schema(d: int, C: int) -> DatasetSchema:
    return DatasetSchema(
        feature_columns=tuple(f"f{j}" for j in range(d)),
        label_column="label",
        class_names=tuple(f"class_{k}" for k in range(C)),
    )


def _from_blocks(blocks: list[np.ndarray], schema: DatasetSchema, rng) -> Dataset:
    C = len(blocks)
    X = np.concatenate(blocks)
    y = np.concatenate([np.full(len(b), k) for k, b in enumerate(blocks)])
    order = rng.permutation(len(X))
    return Dataset(X[order], np.eye(C)[y[order]], schema)


def synth_generate(n_per_class: int, d: int, C: int, separation: float, seed: int) -> Dataset:
    """Gaussian blobs: class k ~ N(separation * e_(k mod d), I)."""
    if separation < 0 or d < 2 or C < 2:
        raise ValueError("need separation >= 0, d >= 2, C >= 2")
    rng = np.random.default_rng(seed)
    blocks = []
    for k in range(C):
        center = np.zeros(d)
        center[k % d] = separation
        blocks.append(center + rng.standard_normal((n_per_class, d)))
    return _from_blocks(blocks, synth_schema(d, C), rng)


def synth_anisotropic(n_per_class: int, d: int, seed: int, radius: float = 6.0,
                      spike: float = 4.0, angle: float = 0.6, noise: float = 0.5) -> Dataset:
    """Three classes that call for different metrics.

    Class 0 sits at ``radius * u``; class 1 shifts class 0 along one coordinate
    only (a max-deviation difference); class 2 rotates class 0's center by
    ``angle`` radians at the same norm (a pure direction difference).
    """
    rng = np.random.default_rng(seed)
    u = np.ones(d) / math.sqrt(d)
    v = np.zeros(d)
    v[0::2], v[1::2] = 1.0, -1.0
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    c0 = radius * u
    c1 = c0.copy()
    c1[-1] += spike
    c2 = radius * (math.cos(angle) * u + math.sin(angle) * v)
    blocks = [c + noise * rng.standard_normal((n_per_class, d)) for c in (c0, c1, c2)]
    return _from_blocks(blocks, synth_schema(d, 3), rng)
