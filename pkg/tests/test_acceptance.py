"""Acceptance suite. Each test records one pass/fail line (see the terminal summary)."""
import json
import os
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from acceptance_log import record
from mspl import embedder
from mspl.cli import main
from mspl.config import load_config, parse_config
from mspl.dataio import Dataset, synth_schema
from mspl.embedder import Architecture, init
from mspl.episodic import Episode, EpisodePlan, create_episodes, sample_class, tile_factor
from mspl.evaluator import auprc
from mspl.experiment import prepare, run_seeds
from mspl.metric_spaces import (
    METRICS,
    DISTANCES,
    MetricId,
    MetricWeights,
    dist_cosine,
    dist_chebyshev,
    dist_euclidean,
    dist_wasserstein,
)
from mspl.prototypes import EmaParams, ema_update
from mspl.trainer import TrainConfig, episode_forward, episode_gradient, train
from oracles import average_precision_exhaustive

pytestmark = pytest.mark.acceptance


# -- 1: metric axioms -------------------------------------------------------

def test_ac1_metric_axioms():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    failures = []
    for i in range(1000):
        z, c = rng.standard_normal((2, 32)) * rng.uniform(0.1, 10)
        z, c = z[None], c[None]
        for f in (dist_euclidean, dist_chebyshev, dist_wasserstein):
            a, b, s = f(z, c)[0, 0], f(c, z)[0, 0], f(z, z)[0, 0]
            if not (a >= 0 and a == b and s == 0.0):
                failures.append((i, f.__name__))
        cd = dist_cosine(z, c)[0, 0]
        k = rng.uniform(1e-3, 1e3)
        if not (0 <= cd <= 2 and abs(dist_cosine(k * z, c)[0, 0] - cd) <= 1e-12
                and abs(dist_cosine(z, k * c)[0, 0] - cd) <= 1e-12):
            failures.append((i, "cosine"))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 5
    record("AC1 metric axioms", ok, f"{len(failures)} violations over 1000 pairs, {dt:.2f}s (< 5s)")
    assert ok, failures[:5]


# -- 2: gradient fidelity ---------------------------------------------------

def _frozen_loss(params, X, ep, Y, w, stats, eps, gamma):
    """Episode loss recomputed from scratch with normalization statistics held fixed.

    Also returns the discrete state (relu masks, max and sort indices, clip
    masks) so perturbations that cross a kink can be detected.
    """
    Z, cache = embedder.forward(params, X)
    ns = len(ep.support_rows())
    Zs, Zq = Z[:ns], Z[ns:]
    a = ep.support_assignments()
    P = np.stack([Zs[a == k].mean(0) for k in range(ep.n_classes)])
    fused = np.zeros((len(Zq), len(P)))
    state = [pre > 0 for pre in cache.pre[:-1]]
    diff = Zq[:, None] - P[None]
    state.append(np.abs(diff).argmax(2))
    state.append(np.argsort(Zq, 1, kind="stable"))
    state.append(np.argsort(P, 1, kind="stable"))
    zs, ps = np.sort(Zq, 1), np.sort(P, 1)
    state.append(np.sign(zs[:, None] - ps[None]))
    for m in w.active():
        mu, sigma = stats[m]
        z = (DISTANCES[m](Zq, P) - mu) / max(sigma, eps)
        state.append(np.abs(z) <= gamma)
        fused += w[m] * np.clip(z, -gamma, gamma)
    total = (Y * np.logaddexp(0, fused) + (1 - Y) * np.logaddexp(0, -fused)).sum()
    return total, state


def _same(sa, sb):
    return all(np.array_equal(a, b) for a, b in zip(sa, sb))


def test_ac2_gradient_fidelity():
    rng = np.random.default_rng(2)
    eps, gamma, h = 1e-8, 5.0, 1e-6
    arch = Architecture(6, (8,), 5)
    t0 = time.perf_counter()
    worst, checked, skipped = 0.0, 0, 0
    for cfg_i in range(20):
        X = rng.standard_normal((6 + 4, 6)) * rng.uniform(0.5, 2)
        labels = np.zeros((10, 3))
        labels[np.arange(10), [0, 0, 1, 1, 2, 2, 0, 0, 1, 2]] = 1
        ds = Dataset(X, labels, synth_schema(6, 3))
        ep = Episode(
            support=(np.array([0, 1]), np.array([2, 3]), np.array([4, 5])),
            query=(np.array([6, 7]), np.array([8]), np.array([9])),
            support_slots=(np.array([0, 1]),) * 3,
            query_slots=(np.array([2, 3]), np.array([2]), np.array([2])),
        )
        w = MetricWeights(*rng.dirichlet(np.ones(4)))
        params = init(arch, int(rng.integers(1 << 31)))
        params = params.with_flat(params.flat + 0.3 * rng.standard_normal(params.flat.size))
        _, g = episode_gradient(params, ds, ep, w, eps, gamma)
        tensor, _ = episode_forward(params, ds, ep, w, eps, gamma)
        stats = {m: (tensor.norm_params.mu[m], tensor.norm_params.sigma[m]) for m in METRICS}
        Xe = X[np.concatenate([ep.support_rows(), ep.query_rows()])]
        Y = labels[ep.query_rows()]
        base, s0 = _frozen_loss(params, Xe, ep, Y, w, stats, eps, gamma)
        for j in range(params.flat.size):
            up, down = params.flat.copy(), params.flat.copy()
            up[j] += h
            down[j] -= h
            fu, su = _frozen_loss(params.with_flat(up), Xe, ep, Y, w, stats, eps, gamma)
            fd, sd = _frozen_loss(params.with_flat(down), Xe, ep, Y, w, stats, eps, gamma)
            if not (_same(s0, su) and _same(s0, sd)):
                skipped += 1
                continue
            num = (fu - fd) / (2 * h)
            err = abs(num - g[j]) / max(abs(num), abs(g[j]), 1e-4)
            worst = max(worst, err)
            checked += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt < 60 and checked > 0.8 * (checked + skipped)
    record("AC2 gradient fidelity", ok,
           f"max rel err {worst:.2e} (<= 1e-4) over {checked} params, {skipped} near kinks skipped, {dt:.1f}s")
    assert ok


# -- 3: baseline reduction --------------------------------------------------

def test_ac3_baseline_reduction(blobs):
    tr, va = blobs
    cfg = TrainConfig(arch=Architecture(tr.dim, (16,), 8), weights=MetricWeights.baseline(),
                      ema_enabled=False, epochs=3, n_episodes=5, support_size=3, query_size=3,
                      n_train_samples=60, val_episodes=3)
    res = train(tr, va, cfg)
    w = MetricWeights.baseline()
    bitwise = argmin = unclipped = 0
    for ep in create_episodes(va, EpisodePlan(100, 5, 5, seed=3)):
        t, _ = episode_forward(res.params, va, ep, w)
        e = MetricId.EUCLIDEAN
        bitwise += t.fused.tobytes() == t.normalized[e].tobytes()
        argmin += np.array_equal(t.fused.argmin(1), t.raw[e].argmin(1))
        unclipped += bool(t.unclipped[e].all())
    ok = bitwise == argmin == 100
    record("AC3 baseline reduction", ok,
           f"bitwise {bitwise}/100, argmin {argmin}/100 ({unclipped} fully unclipped)")
    assert ok


# -- 4: EMA law -------------------------------------------------------------

def _ema_errors(beta, rng, steps=200):
    theta = rng.standard_normal(64)
    e0 = theta + rng.standard_normal(64)
    ema = EmaParams(e0.copy(), beta)
    p = SimpleNamespace(flat=theta)  # ema_update only reads .flat
    strict = gap = 0.0
    for t in range(1, steps + 1):
        ema = ema_update(ema, p)
        got = np.abs(ema.flat - theta)
        want = beta ** t * np.abs(e0 - theta)
        diff = np.abs(got - want)
        nz = want > 0
        strict = max(strict, float(np.max(np.where(nz, diff / np.where(nz, want, 1), diff > 0))))
        gap = max(gap, float(np.max(diff / np.abs(e0 - theta))))
    return strict, gap


def test_ac4_ema_law():
    rng = np.random.default_rng(4)
    results = {b: _ema_errors(b, rng) for b in (0.0, 0.9, 0.99)}
    ok = all(s <= 1e-10 for s, _ in results.values())
    detail = ", ".join(f"beta={b}: rel {s:.1e}" for b, (s, _) in results.items())
    record("AC4 EMA law (rel 1e-10, t<=200)", ok, detail)
    # companion check, scaled by the initial gap instead of the shrinking target
    gap_ok = all(g <= 1e-10 for _, g in results.values())
    record("AC4b EMA law relative to initial gap (not a substitute for AC4)", gap_ok,
           ", ".join(f"beta={b}: {g:.1e}" for b, (_, g) in results.items()))
    assert gap_ok
    assert ok, ("stored EMA values are float64; once beta^t*|gap| falls below ~1e-6*|theta| "
                "their rounding error exceeds 1e-10 of the target")


# -- 5: episode sampler -----------------------------------------------------

def test_ac5_episode_sampler():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(10_000):
        size, ns, nq = int(rng.integers(1, 51)), int(rng.integers(1, 12)), int(rng.integers(1, 12))
        rows = np.arange(1000, 1000 + size)
        s, q, ss, qs = sample_class(rows, ns, nq, rng)
        reps = 1
        while reps * size < ns + nq:
            reps += 1
        tf = tile_factor(size, ns, nq)
        expect_tf = reps
        slots = np.concatenate([ss, qs])
        used_reps = 1 if size >= ns + nq else tf
        good = (len(s) == ns and len(q) == nq and not set(ss.tolist()) & set(qs.tolist())
                and len(set(slots.tolist())) == ns + nq and slots.max() < size * used_reps
                and tf == expect_tf and np.array_equal(np.concatenate([s, q]), rows[slots % size]))
        bad += not good
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    record("AC5 episode sampler", ok, f"{bad} bad of 10000 triples, {dt:.2f}s (< 10s)")
    assert ok


# -- 6: AUPRC ---------------------------------------------------------------

def test_ac6_auprc_oracle():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(500):
        n = int(rng.integers(1, 201))
        levels = int(rng.integers(2, 30))
        scores = rng.integers(0, levels, n) / levels
        truth = rng.uniform(size=n) < rng.uniform(0.05, 0.9)
        truth[rng.integers(n)] = True
        exact = average_precision_exhaustive(scores.tolist(), truth.tolist())
        mismatches += auprc(scores, truth) != float(exact)
    record("AC6 AUPRC oracle", mismatches == 0, f"{mismatches} mismatches over 500 instances (exact)")
    assert mismatches == 0


# -- 7/8: synthetic detection -----------------------------------------------

def _experiment(tmp_path, synth, seeds, weights=None, **train_kw):
    doc = {
        "dataset": {"synth": synth},
        "split": {"fractions": [0.6, 0.2, 0.2], "seed": 0},
        "train": {"n_train_samples": 200, **train_kw},
        "seeds": list(seeds),
        "output_dir": str(tmp_path / "runs"),
        "plots": False,
    }
    if weights:
        doc["weights"] = weights
    return parse_config(doc, tmp_path)


@pytest.mark.slow
def test_ac7_synthetic_detection(tmp_path):
    cfg = _experiment(tmp_path, {"n_per_class": 500, "d": 16, "n_classes": 3, "separation": 6.0},
                      range(40), weights=MetricWeights().as_dict())
    t0 = time.perf_counter()
    reports = run_seeds(cfg, None)
    dt = time.perf_counter() - t0
    bacc = np.mean([r.balanced_accuracy for r in reports])
    ap = np.mean([r.auprc for r in reports])
    ok = bacc >= 0.95 and ap >= 0.95 and dt < 600
    record("AC7 synthetic detection", ok,
           f"40 seeds: bacc {bacc:.4f} (>= 0.95), AUPRC {ap:.4f} (>= 0.95), {dt:.0f}s (< 600s)")
    assert ok


@pytest.mark.slow
def test_ac8_multi_space_vs_baseline(tmp_path):
    synth = {"n_per_class": 300, "d": 16, "n_classes": 3, "kind": "anisotropic"}
    cfg = _experiment(tmp_path, synth, range(20))
    data = prepare(cfg)
    tri = MetricWeights.uniform([MetricId.EUCLIDEAN, MetricId.CHEBYSHEV, MetricId.COSINE])
    multi = np.mean([r.balanced_accuracy for r in run_seeds(cfg, None, tri, data)])
    base = np.mean([r.balanced_accuracy for r in run_seeds(cfg, None, MetricWeights.baseline(), data)])
    ok = multi >= base - 0.01
    record("AC8 multi-space >= baseline", ok, f"tri-metric {multi:.4f} vs euclidean {base:.4f} - 0.01")
    assert ok


# -- 9: determinism ---------------------------------------------------------

def test_ac9_determinism(tmp_path):
    doc = {
        "dataset": {"synth": {"n_per_class": 100, "d": 8, "n_classes": 3, "separation": 3.0}},
        "train": {"epochs": 5, "n_episodes": 10, "n_train_samples": 90},
        "seeds": [0, 1, 2],
        "plots": False,
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    for name in ("a", "b"):
        assert main(["--quiet", "train", "--config", str(p), "--out", str(tmp_path / name)]) == 0
    same = (tmp_path / "a" / "aggregate.csv").read_bytes() == (tmp_path / "b" / "aggregate.csv").read_bytes()
    record("AC9 determinism", same, "aggregate.csv byte-identical across two train runs" if same
           else "aggregate.csv differs")
    assert same


# -- 10: optional real-data reproduction ------------------------------------

def test_ac10_ciciov2024():
    path = os.environ.get("MSPL_CICIOV2024_CONFIG")
    if not path:
        record("AC10 CICIoV2024 (optional)", None, "skipped: MSPL_CICIOV2024_CONFIG not set")
        pytest.skip("set MSPL_CICIOV2024_CONFIG to a config pointing at the dataset CSV")
    cfg = load_config(Path(path))
    reports = run_seeds(cfg, None, MetricWeights())
    bacc = np.mean([r.balanced_accuracy for r in reports])
    ap = np.mean([r.auprc for r in reports])
    ok = abs(bacc - 0.9813) <= 0.05 and abs(ap - 0.9506) <= 0.08
    record("AC10 CICIoV2024 (optional)", ok, f"{len(reports)} seeds: bacc {bacc:.4f}, AUPRC {ap:.4f}")
    assert ok
