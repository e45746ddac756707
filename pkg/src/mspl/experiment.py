"""Run configured experiments: data prep, per-seed training, aggregation, sweeps."""
from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .config import CsvSource, ExperimentConfig
from .dataio import Dataset, FeatureStats
from .embedder import load_checkpoint, save_checkpoint
from .episodic import EpisodePlan, create_episodes
from .errors import ShapeMismatch
from .evaluator import EvalReport, SeedAggregate, aggregate_seeds
from .metric_spaces import METRICS, MetricWeights
from .trainer import TrainConfig, TrainResult, train, validate

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("rank", "label", *(m.value for m in METRICS), "mean_macro_f1", "std_macro_f1",
                 "mean_balanced_accuracy", "std_balanced_accuracy", "mean_auprc", "std_auprc",
                 "n_seeds")


@dataclass
class PreparedData:
    train: Dataset
    val: Dataset
    test: Dataset
    stats: FeatureStats


def load_source(cfg: ExperimentConfig) -> Dataset:
    src = cfg.source
    if isinstance(src, CsvSource):
        return dataio.load_csv(src.path, src.schema)
    if src.kind == "anisotropic":
        return dataio.synth_anisotropic(src.n_per_class, src.d, src.seed)
    return dataio.synth_generate(src.n_per_class, src.d, src.n_classes, src.separation, src.seed)


def prepare(cfg: ExperimentConfig, stats: FeatureStats | None = None) -> PreparedData:
    """Split the dataset and standardize all parts with train statistics."""
    ds = load_source(cfg)
    tr, va, te = dataio.split(ds, cfg.fractions, cfg.split_seed)
    if stats is not None and len(stats.mean) != tr.dim:
        raise ShapeMismatch(f"checkpoint expects {len(stats.mean)} features, dataset has {tr.dim}",
                            expected=len(stats.mean), got=tr.dim)
    tr, stats = dataio.standardize(tr, stats)
    va = dataio.standardize(va, stats)[0] if len(va) else va
    te = dataio.standardize(te, stats)[0] if len(te) else te
    return PreparedData(tr, va, te, stats)


def checkpoint_meta(tc: TrainConfig, data: PreparedData, result: TrainResult) -> dict:
    return {
        "seed": tc.seed,
        "weights": tc.weights.as_dict(),
        "eps": tc.eps,
        "gamma": tc.gamma,
        "feature_mean": [float(v) for v in data.stats.mean],
        "feature_std": [float(v) for v in data.stats.std],
        "class_names": list(data.train.schema.class_names),
        "val_plan": {"n_episodes": tc.val_episodes, "support_size": tc.support_size,
                     "query_size": tc.val_plan().query_size, "seed": tc.val_seed},
        "best_epoch": result.history.best_epoch,
        "steps": result.n_steps,
    }


def run_seed(cfg: ExperimentConfig, seed: int, data: PreparedData, out_dir: Path | None,
             weights: MetricWeights | None = None) -> EvalReport:
    tc = cfg.train_config(data.train.dim, seed, weights)
    result = train(data.train, data.val, tc)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "checkpoint.json", result.params, result.ema.flat,
                        tc.ema_enabled, tc.ema_beta, checkpoint_meta(tc, data, result))
        result.history.save_csv(out_dir / "history.csv")
        result.report.save(out_dir / "report.json")
        if len(data.test):
            test_eps = create_episodes(data.test, tc.val_plan())
            validate(result.eval_params, test_eps, data.test, tc.weights, tc.eps, tc.gamma,
                     result.report.params).save(out_dir / "test_report.json")
        if cfg.plots:
            from .plotting import plot_history
            plot_history(result.history, out_dir / "history.png", title=f"seed {seed}")
    return result.report


def _run_seed_job(args):
    cfg, seed, out_dir, weights = args
    return run_seed(cfg, seed, prepare(cfg), out_dir, weights)


def run_seeds(cfg: ExperimentConfig, out_dir: Path | None, weights: MetricWeights | None = None,
              data: PreparedData | None = None) -> list[EvalReport]:
    dirs = [None if out_dir is None else out_dir / f"seed_{s}" for s in cfg.seeds]
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        jobs = [(cfg, s, d, weights) for s, d in zip(cfg.seeds, dirs)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(_run_seed_job, jobs))
    data = data or prepare(cfg)
    reports = []
    for s, d in zip(cfg.seeds, dirs):
        reports.append(run_seed(cfg, s, data, d, weights))
        log.info("seed %d: bacc %.4f f1 %.4f auprc %.4f", s, reports[-1].balanced_accuracy,
                 reports[-1].macro_f1, reports[-1].auprc)
    return reports


def run_train(cfg: ExperimentConfig) -> SeedAggregate:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    agg = aggregate_seeds(run_seeds(cfg, out))
    agg.save_csv(out / "aggregate.csv")
    if cfg.plots:
        from .plotting import plot_aggregate
        plot_aggregate(agg, out / "aggregate.png")
    return agg


def run_eval(cfg: ExperimentConfig, checkpoint_path, split: str = "val") -> EvalReport:
    """Score a saved checkpoint with the validation episodes of its run.

    Evaluation uses the EMA parameters whenever the checkpoint has EMA enabled.
    """
    ck = load_checkpoint(checkpoint_path)
    meta = ck.meta
    stats = FeatureStats(np.asarray(meta["feature_mean"]), np.asarray(meta["feature_std"]))
    if ck.params.arch.input_dim != len(stats.mean):
        raise ShapeMismatch("checkpoint architecture and feature statistics disagree",
                            expected=ck.params.arch.input_dim, got=len(stats.mean))
    data = prepare(cfg, stats)
    ds = data.val if split == "val" else data.test
    vp = meta["val_plan"]
    episodes = create_episodes(ds, EpisodePlan(vp["n_episodes"], vp["support_size"],
                                               vp["query_size"], vp["seed"]))
    label = "ema" if ck.ema_enabled else "raw"
    return validate(ck.eval_params, episodes, ds, MetricWeights.from_dict(meta["weights"]),
                    meta["eps"], meta["gamma"], label)


# -- weight sweeps ----------------------------------------------------------

def simplex_grid(kind: str = "default") -> list[MetricWeights]:
    """Uniform mixtures over every non-empty metric subset (15 points) or the vertices."""
    sizes = (1,) if kind == "vertices" else (1, 2, 3, 4)
    return [MetricWeights.uniform(sub) for r in sizes for sub in itertools.combinations(METRICS, r)]


def load_grid(spec: str) -> list[MetricWeights]:
    if spec in ("default", "vertices"):
        return simplex_grid(spec)
    with open(spec, encoding="utf-8") as fh:
        return [MetricWeights.from_dict(d) for d in json.load(fh)]


def weight_label(w: MetricWeights) -> str:
    return "+".join(m.value for m in w.active())


def run_sweep(cfg: ExperimentConfig, grid: list[MetricWeights]) -> list[dict]:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    data = prepare(cfg) if cfg.workers <= 1 else None
    rows = []
    for w in grid:
        agg = aggregate_seeds(run_seeds(cfg, None, w, data))
        row = {"label": weight_label(w), **w.as_dict(), "n_seeds": agg.n_seeds}
        for m in ("macro_f1", "balanced_accuracy", "auprc"):
            row[f"mean_{m}"] = agg.mean[m]
            row[f"std_{m}"] = agg.std[m]
        rows.append(row)
    rows.sort(key=lambda r: -r["mean_macro_f1"])  # stable: grid order breaks ties
    for i, r in enumerate(rows):
        r["rank"] = i + 1
    save_sweep_csv(rows, out / "sweep.csv")
    if cfg.plots:
        from .plotting import plot_sweep
        plot_sweep(rows, out / "sweep.png")
    return rows


def save_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])


def load_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k == "label":
                continue
            r[k] = int(v) if k in ("rank", "n_seeds") else float(v)
    return rows
