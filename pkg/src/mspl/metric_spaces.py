"""Four query-to-prototype distances, per-episode z-scoring and weighted fusion.

All distance functions take query embeddings Z (Q x m) and prototypes
P (C x m) and return a Q x C matrix.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, WeightViolation

DEFAULT_EPS = 1e-8
DEFAULT_GAMMA = 5.0
SIMPLEX_TOL = 1e-9


class MetricId(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"
    CHEBYSHEV = "chebyshev"
    WASSERSTEIN = "wasserstein"


METRICS = tuple(MetricId)


@dataclass(frozen=True)
class MetricWeights:
    euclidean: float = 0.25
    cosine: float = 0.25
    chebyshev: float = 0.25
    wasserstein: float = 0.25

    def __post_init__(self):
        w = self.as_array()
        if not np.isfinite(w).all() or (w < 0).any() or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise WeightViolation(
                f"MetricWeights must be non-negative and sum to 1, got {self.as_dict()} "
                f"(sum {w.sum():.12g})")

    def __getitem__(self, m: MetricId) -> float:
        return getattr(self, MetricId(m).value)

    def as_array(self) -> np.ndarray:
        return np.array([self.euclidean, self.cosine, self.chebyshev, self.wasserstein], dtype=np.float64)

    def as_dict(self) -> dict:
        return {m.value: self[m] for m in METRICS}

    def active(self) -> list[MetricId]:
        return [m for m in METRICS if self[m] > 0]

    @classmethod
    def from_dict(cls, d: dict) -> "MetricWeights":
        unknown = set(d) - {m.value for m in METRICS}
        if unknown:
            raise WeightViolation(f"unknown metric names {sorted(unknown)}")
        return cls(**{m.value: float(d.get(m.value, 0.0)) for m in METRICS})

    @classmethod
    def uniform(cls, metrics) -> "MetricWeights":
        metrics = [MetricId(m) for m in metrics]
        return cls(**{m.value: (1.0 / len(metrics) if m in metrics else 0.0) for m in METRICS})

    @classmethod
    def baseline(cls) -> "MetricWeights":
        return cls.uniform([MetricId.EUCLIDEAN])


@dataclass(frozen=True)
class NormalizationParams:
    mu: dict
    sigma: dict
    eps: float = DEFAULT_EPS
    gamma: float = DEFAULT_GAMMA


@dataclass
class DistanceTensor:
    raw: dict
    normalized: dict
    fused: np.ndarray
    norm_params: NormalizationParams
    unclipped: dict = field(default_factory=dict)
    degenerate: int = 0


def _check(Z, P):
    Z = np.asarray(Z, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Z.ndim != 2 or P.ndim != 2 or Z.shape[1] != P.shape[1]:
        raise ShapeMismatch("embedding and prototype widths differ",
                            expected=P.shape, got=Z.shape, module="metric_spaces")
    return Z, P


def dist_euclidean(Z, P) -> np.ndarray:
    Z, P = _check(Z, P)
    diff = Z[:, None, :] - P[None, :, :]
    return np.sqrt(np.einsum("qkj,qkj->qk", diff, diff))


def _floored_norms(X, eps):
    n = np.linalg.norm(X, axis=1)
    return n, np.maximum(n, eps)


def dist_cosine(Z, P, eps: float = DEFAULT_EPS) -> np.ndarray:
    return _cosine(Z, P, eps)[0]


def _cosine(Z, P, eps):
    Z, P = _check(Z, P)
    nz, fz = _floored_norms(Z, eps)
    nc, fc = _floored_norms(P, eps)
    degenerate = int((nz < eps).sum() + (nc < eps).sum())
    return 1.0 - (Z @ P.T) / np.outer(fz, fc), degenerate


def dist_chebyshev(Z, P) -> np.ndarray:
    Z, P = _check(Z, P)
    return np.abs(Z[:, None, :] - P[None, :, :]).max(axis=2)


def dist_wasserstein(Z, P) -> np.ndarray:
    """1-Wasserstein between the coordinate distributions of each row pair.

    For two size-m empirical measures the quantile integral reduces to the
    mean absolute difference of the sorted values.
    """
    Z, P = _check(Z, P)
    zs = np.sort(Z, axis=1)
    ps = np.sort(P, axis=1)
    return np.abs(zs[:, None, :] - ps[None, :, :]).mean(axis=2)


DISTANCES = {
    MetricId.EUCLIDEAN: dist_euclidean,
    MetricId.COSINE: dist_cosine,
    MetricId.CHEBYSHEV: dist_chebyshev,
    MetricId.WASSERSTEIN: dist_wasserstein,
}


def normalize_metric(D, eps: float = DEFAULT_EPS, gamma: float = DEFAULT_GAMMA):
    """Z-score over every entry of D, clipped to [-gamma, gamma].

    Returns (normalized, mu, sigma) with sigma the population std (unfloored).
    """
    D = np.asarray(D, dtype=np.float64)
    mu = float(D.mean()) if D.size else 0.0
    sigma = float(D.std()) if D.size else 0.0
    return np.clip((D - mu) / max(sigma, eps), -gamma, gamma), mu, sigma


def fuse(normalized: dict, w: MetricWeights) -> np.ndarray:
    if not isinstance(w, MetricWeights):
        w = MetricWeights.from_dict(w)
    active = w.active()
    shapes = {np.shape(normalized[m]) for m in active}
    if len(shapes) != 1:
        raise ShapeMismatch("normalized matrices differ in shape", got=sorted(shapes),
                            module="metric_spaces")
    out = w[active[0]] * normalized[active[0]]
    for m in active[1:]:
        out = out + w[m] * normalized[m]
    return out


def compute_distances(Z, P, w: MetricWeights, eps: float = DEFAULT_EPS,
                      gamma: float = DEFAULT_GAMMA) -> DistanceTensor:
    """Raw, normalized and fused distances for every metric.

    All four metrics are computed even when weighted zero so the tensor is
    complete for reporting; only active metrics enter the fused matrix.
    """
    Z, P = _check(Z, P)
    raw, normed, mus, sigmas, unclipped = {}, {}, {}, {}, {}
    degenerate = 0
    for m in METRICS:
        if m is MetricId.COSINE:
            d, degenerate = _cosine(Z, P, eps)
        else:
            d = DISTANCES[m](Z, P)
        nd, mu, sigma = normalize_metric(d, eps, gamma)
        raw[m], normed[m], mus[m], sigmas[m] = d, nd, mu, sigma
        z = (d - mu) / max(sigma, eps)
        unclipped[m] = np.abs(z) <= gamma
    return DistanceTensor(raw, normed, fuse(normed, w),
                          NormalizationParams(mus, sigmas, eps, gamma), unclipped, degenerate)


# -- gradients --------------------------------------------------------------

def _grad_euclidean(Z, P, D, G):
    diff = Z[:, None, :] - P[None, :, :]
    safe = np.where(D > 0, D, 1.0)
    coef = np.where(D > 0, G / safe, 0.0)
    dZ = np.einsum("qk,qkj->qj", coef, diff)
    dP = -np.einsum("qk,qkj->kj", coef, diff)
    return dZ, dP


def _grad_cosine(Z, P, G, eps):
    nz, fz = _floored_norms(Z, eps)
    nc, fc = _floored_norms(P, eps)
    dot = Z @ P.T
    denom = np.outer(fz, fc)
    # d(dot/denom)/dz = c/denom - dot * z / (|z|^3 |c|)  (second term only when unfloored)
    A = G / denom
    dZ = -(A @ P)
    dP = -(A.T @ Z)
    live_z = (nz >= eps)[:, None]
    live_c = (nc >= eps)[None, :]
    Bz = np.where(live_z, G * dot / denom / np.maximum(nz, eps)[:, None] ** 2, 0.0)
    Bc = np.where(live_c, G * dot / denom / np.maximum(nc, eps)[None, :] ** 2, 0.0)
    dZ += Bz.sum(axis=1)[:, None] * Z
    dP += Bc.sum(axis=0)[:, None] * P
    return dZ, dP


def _grad_chebyshev(Z, P, G):
    diff = Z[:, None, :] - P[None, :, :]
    j = np.abs(diff).argmax(axis=2)  # first maximizer
    q, k = np.indices(j.shape)
    s = np.sign(diff[q, k, j]) * G
    dZ = np.zeros_like(Z)
    dP = np.zeros_like(P)
    np.add.at(dZ, (q, j), s)
    np.add.at(dP, (k, j), -s)
    return dZ, dP


def _grad_wasserstein(Z, P, G):
    m = Z.shape[1]
    iz = np.argsort(Z, axis=1, kind="stable")
    ip = np.argsort(P, axis=1, kind="stable")
    zs = np.take_along_axis(Z, iz, axis=1)
    ps = np.take_along_axis(P, ip, axis=1)
    S = np.sign(zs[:, None, :] - ps[None, :, :]) * (G[:, :, None] / m)
    dzs = S.sum(axis=1)
    dps = -S.sum(axis=0)
    dZ = np.zeros_like(Z)
    dP = np.zeros_like(P)
    np.put_along_axis(dZ, iz, dzs, axis=1)
    np.put_along_axis(dP, ip, dps, axis=1)
    return dZ, dP


def distances_backward(Z, P, w: MetricWeights, dfused, tensor: DistanceTensor | None = None,
                       eps: float = DEFAULT_EPS, gamma: float = DEFAULT_GAMMA):
    """Gradients of <dfused, fused distances> w.r.t. Z and P.

    Normalization statistics are held constant and clipped entries pass no
    gradient. Chebyshev routes to the first maximizing coordinate; Wasserstein
    through the sort order of the forward pass.
    """
    Z, P = _check(Z, P)
    dfused = np.asarray(dfused, dtype=np.float64)
    if dfused.shape != (Z.shape[0], P.shape[0]):
        raise ShapeMismatch("upstream gradient has wrong shape",
                            expected=(Z.shape[0], P.shape[0]), got=dfused.shape,
                            module="metric_spaces")
    if tensor is None:
        tensor = compute_distances(Z, P, w, eps, gamma)
    eps = tensor.norm_params.eps
    dZ = np.zeros_like(Z)
    dP = np.zeros_like(P)
    for m in w.active():
        scale = w[m] / max(tensor.norm_params.sigma[m], eps)
        G = dfused * scale * tensor.unclipped[m]
        if m is MetricId.EUCLIDEAN:
            gz, gp = _grad_euclidean(Z, P, tensor.raw[m], G)
        elif m is MetricId.COSINE:
            gz, gp = _grad_cosine(Z, P, G, eps)
        elif m is MetricId.CHEBYSHEV:
            gz, gp = _grad_chebyshev(Z, P, G)
        else:
            gz, gp = _grad_wasserstein(Z, P, G)
        dZ += gz
        dP += gp
    return dZ, dP
