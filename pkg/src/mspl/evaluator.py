"""Predictions, balanced accuracy, macro F1, average precision, seed aggregation."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EmptyList, NoPositives, NoQueries
from .objective import sigmoid

REPORT_FORMAT_VERSION = 1
SCALAR_METRICS = ("balanced_accuracy", "macro_f1", "auprc")


def scores_from_distances(D) -> np.ndarray:
    return sigmoid(-np.asarray(D, dtype=np.float64))


def predict(scores, mode: str = "multiclass") -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if mode == "multilabel":
        return (scores >= 0.5).astype(np.float64)
    out = np.zeros_like(scores)
    out[np.arange(len(scores)), np.argmax(scores, axis=1)] = 1.0  # argmax takes the first max
    return out


def _confusion(pred, truth):
    pred = np.asarray(pred) > 0.5
    truth = np.asarray(truth) > 0.5
    if pred.shape[0] == 0:
        raise NoQueries("no queries to score")
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    return tp, fp, fn


def per_class_recall(pred, truth) -> np.ndarray:
    tp, _, fn = _confusion(pred, truth)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tp + fn > 0, tp / (tp + fn), np.nan)


def balanced_accuracy(pred, truth) -> float:
    """Mean recall over the classes present in ``truth``."""
    return float(np.nanmean(per_class_recall(pred, truth)))


def per_class_f1(pred, truth) -> np.ndarray:
    """F1 per class; NaN for classes neither predicted nor present."""
    tp, fp, fn = _confusion(pred, truth)
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 2 * tp / denom, np.nan)


def macro_f1(pred, truth) -> float:
    return float(np.nanmean(per_class_f1(pred, truth)))


def auprc(scores, truth) -> float:
    """Average precision of one class: sum over thresholds of dRecall * precision.

    Thresholds are the distinct scores in descending order, so tied scores
    enter as a single step. The sum is accumulated over integer counts in
    exact rational arithmetic and rounded once.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth) > 0.5
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise NoPositives()
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    hits = np.cumsum(truth[order])
    last = np.r_[s[1:] != s[:-1], True]  # final position of each tie group
    tp = hits[last].tolist()
    pp = (np.flatnonzero(last) + 1).tolist()
    total = Fraction(0)
    prev = 0
    for t, p in zip(tp, pp):
        if t != prev:
            total += Fraction((t - prev) * t, p)
            prev = t
    return float(total / n_pos)


def auprc_macro(scores, truth) -> tuple[float, np.ndarray]:
    """Macro AP over classes that have positives; per-class AP is NaN otherwise."""
    scores = np.asarray(scores)
    truth = np.asarray(truth)
    per = np.full(scores.shape[1], np.nan)
    for k in range(scores.shape[1]):
        try:
            per[k] = auprc(scores[:, k], truth[:, k])
        except NoPositives:
            pass
    if np.isnan(per).all():
        raise NoPositives()
    return float(np.nanmean(per)), per


def _nan_to_none(a):
    return [None if np.isnan(v) else float(v) for v in a]


@dataclass
class EvalReport:
    balanced_accuracy: float
    macro_f1: float
    auprc: float
    n_queries: int
    per_class_recall: list = field(default_factory=list)
    per_class_f1: list = field(default_factory=list)
    per_class_auprc: list = field(default_factory=list)
    auprc_excluded: list = field(default_factory=list)
    params: str = "raw"

    def to_dict(self) -> dict:
        return {"format_version": REPORT_FORMAT_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = {k: v for k, v in d.items() if k != "format_version"}
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def evaluate(scores, truth, mode: str = "multiclass", params: str = "raw") -> EvalReport:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if scores.shape[0] == 0:
        raise NoQueries("no queries to score")
    pred = predict(scores, mode)
    ap, per_ap = auprc_macro(scores, truth)
    recall = per_class_recall(pred, truth)
    f1 = per_class_f1(pred, truth)
    return EvalReport(
        balanced_accuracy=float(np.nanmean(recall)),
        macro_f1=float(np.nanmean(f1)),
        auprc=ap,
        n_queries=int(scores.shape[0]),
        per_class_recall=_nan_to_none(recall),
        per_class_f1=_nan_to_none(f1),
        per_class_auprc=_nan_to_none(per_ap),
        auprc_excluded=[int(k) for k in np.flatnonzero(np.isnan(per_ap))],
        params=params,
    )


@dataclass(frozen=True)
class SeedAggregate:
    mean: dict
    std: dict
    n_seeds: int

    def rows(self):
        return [(m, self.mean[m], self.std[m], self.n_seeds) for m in SCALAR_METRICS]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "mean", "std", "n_seeds"])
            for m, mu, sd, n in self.rows():
                w.writerow([m, repr(mu), repr(sd), n])

    @classmethod
    def load_csv(cls, path) -> "SeedAggregate":
        mean, std, n = {}, {}, 0
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                mean[row["metric"]] = float(row["mean"])
                std[row["metric"]] = float(row["std"])
                n = int(row["n_seeds"])
        return cls(mean, std, n)


def aggregate_seeds(reports) -> SeedAggregate:
    reports = list(reports)
    if not reports:
        raise EmptyList("no reports to aggregate")
    mean, std = {}, {}
    for m in SCALAR_METRICS:
        v = np.array([getattr(r, m) for r in reports], dtype=np.float64)
        mean[m] = float(v.mean())
        std[m] = float(v.std())
    return SeedAggregate(mean, std, len(reports))
