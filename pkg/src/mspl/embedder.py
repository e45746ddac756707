"""Fully connected embedding network with hand-written backprop."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ShapeMismatch

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    output_dim: int = 32
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.output_dim, *self.hidden_dims)) < 1:
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims)

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dims": list(self.hidden_dims),
                "output_dim": self.output_dim, "activation": self.activation}


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus the architecture that gives it structure.

    Layout: for each layer in order, W (fan_in x fan_out, row-major) then b.
    """

    arch: Architecture
    flat: np.ndarray

    def __post_init__(self):
        if self.flat.shape != (self.arch.n_params,):
            raise ShapeMismatch("flat parameter vector has wrong length",
                                expected=self.arch.n_params, got=self.flat.shape)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, pos = [], 0
        for i, o in self.arch.layer_dims:
            W = self.flat[pos:pos + i * o].reshape(i, o)
            pos += i * o
            out.append((W, self.flat[pos:pos + o]))
            pos += o
        return out

    @classmethod
    def from_layers(cls, arch: Architecture, layers) -> "ModelParams":
        flat = np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])
        return cls(arch, flat.astype(np.float64))

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        return ModelParams(self.arch, flat)


@dataclass
class ForwardCache:
    params: ModelParams
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)     # pre-activation of each layer


def init(arch: Architecture, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, o in arch.layer_dims:
        limit = np.sqrt(6.0 / (i + o))
        layers.append((rng.uniform(-limit, limit, size=(i, o)), np.zeros(o)))
    return ModelParams.from_layers(arch, layers)


def _act(x, kind):
    return np.maximum(x, 0.0) if kind == "relu" else np.tanh(x)


def _act_grad(pre, kind):
    if kind == "relu":
        return (pre > 0).astype(np.float64)
    t = np.tanh(pre)
    return 1.0 - t * t


def forward(params: ModelParams, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.arch.input_dim:
        raise ShapeMismatch(
            f"expected {params.arch.input_dim} feature columns, got {X.shape[-1] if X.ndim else X.shape}",
            expected=params.arch.input_dim, got=X.shape[-1] if X.ndim else None)
    cache = ForwardCache(params)
    h = X
    layers = params.layers()
    for li, (W, b) in enumerate(layers):
        cache.inputs.append(h)
        z = h @ W + b
        cache.pre.append(z)
        h = z if li == len(layers) - 1 else _act(z, params.arch.activation)
    return h, cache


def backward(cache: ForwardCache, dZ) -> np.ndarray:
    """Gradient of <dZ, f(X)> with respect to the flat parameter vector."""
    params = cache.params
    dZ = np.asarray(dZ, dtype=np.float64)
    expected = cache.pre[-1].shape
    if dZ.shape != expected:
        raise ShapeMismatch("upstream gradient shape does not match embeddings",
                            expected=expected, got=dZ.shape)
    layers = params.layers()
    grads = [None] * len(layers)
    g = dZ
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        if li != len(layers) - 1:
            g = g * _act_grad(cache.pre[li], params.arch.activation)
        grads[li] = (cache.inputs[li].T @ g, g.sum(axis=0))
        g = g @ W.T
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


def embed(params: ModelParams, X) -> np.ndarray:
    return forward(params, X)[0]


# -- checkpoints ------------------------------------------------------------
# JSON document; floats are written with repr() so a load/save round trip is
# bit-exact. Fields:
#   format_version, architecture{input_dim, hidden_dims, output_dim, activation},
#   params: [float], ema: {enabled, beta, params: [float] | null}, meta: {...}

def save_checkpoint(path, params: ModelParams, ema_flat=None, ema_enabled=False,
                    beta=None, meta=None) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "architecture": params.arch.to_dict(),
        "params": [float(v) for v in params.flat],
        "ema": {
            "enabled": bool(ema_enabled),
            "beta": beta,
            "params": None if ema_flat is None else [float(v) for v in ema_flat],
        },
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


@dataclass
class Checkpoint:
    params: ModelParams
    ema_flat: np.ndarray | None
    ema_enabled: bool
    beta: float | None
    meta: dict

    @property
    def eval_params(self) -> ModelParams:
        """Parameters used for evaluation: the EMA copy when enabled."""
        if self.ema_enabled and self.ema_flat is not None:
            return self.params.with_flat(self.ema_flat)
        return self.params


def load_checkpoint(path) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
        a = doc["architecture"]
        arch = Architecture(int(a["input_dim"]), tuple(a["hidden_dims"]), int(a["output_dim"]),
                            a["activation"])
        params = ModelParams(arch, np.asarray(doc["params"], dtype=np.float64))
        ema = doc["ema"]
        ema_flat = None if ema["params"] is None else np.asarray(ema["params"], dtype=np.float64)
        if ema_flat is not None and ema_flat.shape != params.flat.shape:
            raise CheckpointError("EMA vector length differs from parameter vector")
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    return Checkpoint(params, ema_flat, bool(ema["enabled"]), ema.get("beta"), doc.get("meta", {}))
