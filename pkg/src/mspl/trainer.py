"""Episodic training loop with clipping, Adam, EMA and early stopping."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import embedder
from .dataio import Dataset, stratified_sample
from .embedder import Architecture, ModelParams
from .episodic import Episode, EpisodePlan, create_episodes
from .errors import DivergedLoss, LengthMismatch, NonFiniteGradient
from .evaluator import EvalReport, evaluate, scores_from_distances
from .metric_spaces import DEFAULT_EPS, DEFAULT_GAMMA, MetricWeights, compute_distances, distances_backward
from .objective import loss
from .prototypes import DEFAULT_BETA, EmaParams, compute_prototypes, ema_init, ema_update, prototypes_backward

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_balanced_accuracy", "val_macro_f1", "val_auprc")


@dataclass(frozen=True)
class TrainConfig:
    arch: Architecture
    weights: MetricWeights = field(default_factory=MetricWeights)
    epochs: int = 100
    n_episodes: int = 50
    support_size: int = 5
    query_size: int = 5
    n_train_samples: int = 200
    k_min: int | None = None          # None -> support_size + query_size
    ema_enabled: bool = True
    ema_beta: float = DEFAULT_BETA
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    patience: int = 10
    seed: int = 0
    val_episodes: int = 10
    val_query_size: int | None = None  # None -> query_size
    val_seed: int = 12345
    eps: float = DEFAULT_EPS
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        for name in ("epochs", "n_episodes", "support_size", "query_size", "n_train_samples",
                     "patience", "val_episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")

    @property
    def plan(self) -> EpisodePlan:
        return EpisodePlan(self.n_episodes, self.support_size, self.query_size, self.seed)

    @property
    def min_per_class(self) -> int:
        return self.support_size + self.query_size if self.k_min is None else self.k_min

    def val_plan(self) -> EpisodePlan:
        q = self.query_size if self.val_query_size is None else self.val_query_size
        return EpisodePlan(self.val_episodes, self.support_size, q, self.val_seed)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_balanced_accuracy: list = field(default_factory=list)
    val_macro_f1: list = field(default_factory=list)
    val_auprc: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        return [(i + 1, *vals) for i, vals in enumerate(zip(
            self.train_loss, self.val_balanced_accuracy, self.val_macro_f1, self.val_auprc))]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*HISTORY_COLUMNS, "best"])
            for row in self.rows():
                w.writerow([row[0], *map(repr, row[1:]), int(row[0] - 1 == self.best_epoch)])

    @classmethod
    def load_csv(cls, path) -> "TrainHistory":
        h = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh)):
                h.train_loss.append(float(row["train_loss"]))
                h.val_balanced_accuracy.append(float(row["val_balanced_accuracy"]))
                h.val_macro_f1.append(float(row["val_macro_f1"]))
                h.val_auprc.append(float(row["val_auprc"]))
                if row["best"] == "1":
                    h.best_epoch = i
        return h


@dataclass
class TrainResult:
    params: ModelParams
    ema: EmaParams
    history: TrainHistory
    report: EvalReport
    n_steps: int = 0

    @property
    def eval_params(self) -> ModelParams:
        return self.params.with_flat(self.ema.flat) if self.ema.enabled else self.params


def clip_gradients(g, clip_norm: float) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(g).all():
        raise NonFiniteGradient("gradient contains NaN or Inf")
    norm = float(np.linalg.norm(g))
    if norm > clip_norm:
        return g * (clip_norm / norm)
    return g


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def optimizer_step(params: ModelParams, g, state: AdamState, lr: float):
    g = np.asarray(g, dtype=np.float64)
    if g.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise LengthMismatch(params.flat.size, g.size, module="trainer")
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    flat = params.flat - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.with_flat(flat), replace(state, m=m, v=v, t=t)


def episode_forward(params: ModelParams, ds: Dataset, ep: Episode, w: MetricWeights,
                    eps: float = DEFAULT_EPS, gamma: float = DEFAULT_GAMMA):
    """Embed support + query in one batch and build the fused distance tensor."""
    rows_s, rows_q = ep.support_rows(), ep.query_rows()
    Z, cache = embedder.forward(params, ds.features[np.concatenate([rows_s, rows_q])])
    Zs, Zq = Z[:len(rows_s)], Z[len(rows_s):]
    assign = ep.support_assignments()
    P = compute_prototypes(Zs, assign, ep.n_classes)
    tensor = compute_distances(Zq, P, w, eps, gamma)
    return tensor, (cache, Zs, Zq, P, assign)


def episode_gradient(params: ModelParams, ds: Dataset, ep: Episode, w: MetricWeights,
                     eps: float = DEFAULT_EPS, gamma: float = DEFAULT_GAMMA, scale: float = 1.0):
    """Summed episode loss and its gradient (times ``scale``) w.r.t. the flat parameters."""
    tensor, (cache, Zs, Zq, P, assign) = episode_forward(params, ds, ep, w, eps, gamma)
    lv = loss(tensor.fused, ds.labels[ep.query_rows()])
    dZq, dP = distances_backward(Zq, P, w, lv.grad_D * scale, tensor)
    dZs = prototypes_backward(dP, assign)
    return lv.total, embedder.backward(cache, np.vstack([dZs, dZq]))


def validate(params: ModelParams, episodes, ds: Dataset, w: MetricWeights,
             eps: float = DEFAULT_EPS, gamma: float = DEFAULT_GAMMA, label: str = "raw") -> EvalReport:
    scores, truth = [], []
    for ep in episodes:
        tensor, _ = episode_forward(params, ds, ep, w, eps, gamma)
        scores.append(scores_from_distances(tensor.fused))
        truth.append(ds.labels[ep.query_rows()])
    return evaluate(np.vstack(scores), np.vstack(truth), ds.schema.label_mode, params=label)


def _seeds(seed: int):
    init_seed, sample_seed, episode_seed = np.random.SeedSequence(seed).generate_state(3)
    return int(init_seed), int(sample_seed), int(episode_seed)


def train(ds_train: Dataset, ds_val: Dataset, cfg: TrainConfig, callback=None) -> TrainResult:
    init_seed, sample_seed, episode_seed = _seeds(cfg.seed)
    params = embedder.init(cfg.arch, init_seed)
    n = min(cfg.n_train_samples, len(ds_train))
    pool = stratified_sample(ds_train, n, sample_seed, cfg.min_per_class)
    ema = ema_init(params, cfg.ema_beta, cfg.ema_enabled)
    episodes = create_episodes(pool, replace(cfg.plan, seed=episode_seed))
    val_episodes = create_episodes(ds_val, cfg.val_plan())
    label = "ema" if cfg.ema_enabled else "raw"

    state = AdamState.fresh(params.flat.size)
    history = TrainHistory()
    best = None
    steps = 0
    for epoch in range(cfg.epochs):
        losses = []
        for ep in episodes:
            n_entries = ep.n_classes * len(ep.query_rows())
            total, g = episode_gradient(params, pool, ep, cfg.weights, cfg.eps, cfg.gamma,
                                        scale=1.0 / n_entries)
            if not np.isfinite(total):
                raise DivergedLoss(f"non-finite loss at epoch {epoch + 1}")
            params, state = optimizer_step(params, clip_gradients(g, cfg.clip_norm), state,
                                           cfg.learning_rate)
            ema = ema_update(ema, params)
            losses.append(total)
            steps += 1
        eval_params = params.with_flat(ema.flat) if cfg.ema_enabled else params
        rep = validate(eval_params, val_episodes, ds_val, cfg.weights, cfg.eps, cfg.gamma, label)
        history.train_loss.append(float(np.mean(losses)))
        history.val_balanced_accuracy.append(rep.balanced_accuracy)
        history.val_macro_f1.append(rep.macro_f1)
        history.val_auprc.append(rep.auprc)
        if best is None or rep.macro_f1 > best[0].macro_f1:
            best = (rep, params, ema)
            history.best_epoch = epoch
        if callback is not None:
            callback(epoch, history, params, ema)
        log.debug("epoch %d loss %.4f val f1 %.4f", epoch + 1, history.train_loss[-1], rep.macro_f1)
        if epoch - history.best_epoch >= cfg.patience:
            history.stopped_early = epoch < cfg.epochs - 1
            break
    rep, params, ema = best
    return TrainResult(params, ema, history, rep, steps)
