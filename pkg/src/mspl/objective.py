"""Multi-label sigmoid cross-entropy on negative fused distances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonBinaryLabel, ShapeMismatch


@dataclass(frozen=True)
class LossValue:
    total: float
    per_class: np.ndarray
    grad_D: np.ndarray


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def loss(D, Y) -> LossValue:
    """Summed BCE with score sigmoid(-D) per (query, class) entry.

    -[y log s(-D) + (1-y) log(1 - s(-D))] = y softplus(D) + (1-y) softplus(-D)
    """
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if D.shape != Y.shape:
        raise ShapeMismatch("distance and label matrices differ in shape",
                            expected=D.shape, got=Y.shape, module="objective")
    if not np.isin(Y, (0.0, 1.0)).all():
        raise NonBinaryLabel("labels must be 0 or 1")
    terms = Y * np.logaddexp(0.0, D) + (1.0 - Y) * np.logaddexp(0.0, -D)
    per_class = terms.sum(axis=0)
    return LossValue(float(per_class.sum()), per_class, Y - sigmoid(-D))
