"""Class prototypes and the parameter-level exponential moving average."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedder import ModelParams
from .errors import EmptyClassSupport, LengthMismatch

DEFAULT_BETA = 0.99


def compute_prototypes(Zs, assignments, n_classes: int | None = None) -> np.ndarray:
    """Mean support embedding per class (C x m)."""
    Zs = np.asarray(Zs, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    C = int(assignments.max()) + 1 if n_classes is None else n_classes
    counts = np.bincount(assignments, minlength=C)
    for k in range(C):
        if counts[k] == 0:
            raise EmptyClassSupport(k)
    sums = np.zeros((C, Zs.shape[1]))
    np.add.at(sums, assignments, Zs)
    return sums / counts[:, None]


def prototypes_backward(dP, assignments) -> np.ndarray:
    """Spread the prototype gradient back onto the support embeddings."""
    assignments = np.asarray(assignments, dtype=np.int64)
    counts = np.bincount(assignments, minlength=dP.shape[0])
    return dP[assignments] / counts[assignments][:, None]


@dataclass
class EmaParams:
    flat: np.ndarray
    beta: float = DEFAULT_BETA
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"EMA decay must be in [0, 1), got {self.beta}")


def ema_init(params: ModelParams, beta: float = DEFAULT_BETA, enabled: bool = True) -> EmaParams:
    return EmaParams(params.flat.copy(), beta, enabled)


def ema_update(ema: EmaParams, params: ModelParams) -> EmaParams:
    if ema.flat.shape != params.flat.shape:
        raise LengthMismatch(ema.flat.size, params.flat.size)
    if not ema.enabled:
        return ema
    flat = ema.beta * ema.flat + (1.0 - ema.beta) * params.flat
    return EmaParams(flat, ema.beta, ema.enabled)
