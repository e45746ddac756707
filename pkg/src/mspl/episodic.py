"""Balanced support/query episodes with repetition for scarce classes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Dataset
from .errors import EmptyClass, MissingClass


@dataclass(frozen=True)
class EpisodePlan:
    n_episodes: int
    support_size: int
    query_size: int
    seed: int = 0

    def __post_init__(self):
        for name in ("n_episodes", "support_size", "query_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Episode:
    """Row positions per class; ``support[k]`` has N_s entries, ``query[k]`` N_q.

    ``support_slots``/``query_slots`` are positions in the tiled per-class pool
    the rows were drawn from, so support and query never share a slot even when
    a scarce class forces the same row into both.
    """

    support: tuple[np.ndarray, ...]
    query: tuple[np.ndarray, ...]
    support_slots: tuple[np.ndarray, ...]
    query_slots: tuple[np.ndarray, ...]

    @property
    def n_classes(self) -> int:
        return len(self.support)

    def support_rows(self) -> np.ndarray:
        return np.concatenate(self.support)

    def query_rows(self) -> np.ndarray:
        return np.concatenate(self.query)

    def support_assignments(self) -> np.ndarray:
        return np.concatenate([np.full(len(s), k) for k, s in enumerate(self.support)])

    def query_assignments(self) -> np.ndarray:
        return np.concatenate([np.full(len(q), k) for k, q in enumerate(self.query)])


def tile_factor(class_size: int, n_support: int, n_query: int) -> int:
    need = n_support + n_query
    return -(-need // class_size)


def sample_class(rows_k, n_support: int, n_query: int, rng: np.random.Generator):
    """Draw N_s + N_q slots for one class.

    Returns (support_rows, query_rows, support_slots, query_slots). With fewer
    rows than needed the class is tiled ceil((N_s+N_q)/|rows|) times first.
    """
    rows_k = np.asarray(rows_k)
    if rows_k.size == 0:
        raise EmptyClass()
    need = n_support + n_query
    reps = 1 if rows_k.size >= need else tile_factor(rows_k.size, n_support, n_query)
    pool = np.tile(rows_k, reps)
    slots = rng.choice(pool.size, size=need, replace=False)
    return pool[slots[:n_support]], pool[slots[n_support:]], slots[:n_support], slots[n_support:]


def create_episodes(ds: Dataset, plan: EpisodePlan) -> list[Episode]:
    rows = ds.class_rows()
    for k, r in enumerate(rows):
        if r.size == 0:
            raise MissingClass(k)
    rng = np.random.default_rng(plan.seed)
    episodes = []
    for _ in range(plan.n_episodes):
        parts = [sample_class(r, plan.support_size, plan.query_size, rng) for r in rows]
        s, q, ss, qs = zip(*parts)
        episodes.append(Episode(s, q, ss, qs))
    return episodes
