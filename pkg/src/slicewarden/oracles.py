"""Built-in independent check suites.

Each oracle recomputes a result along a deliberately different path from the
production implementation (brute force, enumeration, finite differences) so
`selfcheck` and the test suite can cross-validate the pipeline.
"""

from __future__ import annotations

import itertools
import math
import random
from typing import Callable

import numpy as np

from .events import EventTrace, ProcedureKind
from .features import FEATURE_NAMES, NUM_FEATURES

PK = ProcedureKind


def naive_window_features(trace: EventTrace, window: float = 1.0) -> np.ndarray:
    """Recompute the 17 per-window features by filtering the full event list
    per window and replaying session gauges from scratch each time. Quadratic
    and slow on purpose; used only as a reference."""
    if not trace.events:
        return np.zeros((0, NUM_FEATURES))
    num_slices = int(trace.config["num_slices"])
    duration = float(trace.config["emulation_duration"])
    n_windows = int(math.ceil(duration / window))
    events = trace.events
    release_kinds = (PK.PDU_SESSION_RELEASE, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION)

    def gauge_at(t_end: float) -> list[int]:
        g = [0] * num_slices
        for ev in events:
            if ev.timestamp >= t_end:
                break
            if not ev.success:
                continue
            if ev.kind is PK.PDU_SESSION_ESTABLISHMENT:
                g[ev.slice_id] += 1
            elif ev.kind in release_kinds and g[ev.slice_id] > 0:
                g[ev.slice_id] -= 1
        return g

    out = np.zeros((n_windows, NUM_FEATURES))
    for w in range(n_windows):
        lo, hi = w * window, (w + 1) * window
        win = [ev for ev in events if lo <= ev.timestamp < hi]
        regs = [ev for ev in win if ev.kind is PK.REGISTRATION]
        regs_ok = [ev for ev in regs if ev.success]
        svcs = [ev for ev in win if ev.kind in (PK.UPLINK, PK.DOWNLINK)]
        svcs_ok = [ev for ev in svcs if ev.success]
        ests = [ev for ev in win if ev.kind is PK.PDU_SESSION_ESTABLISHMENT]
        ests_ok = [ev for ev in ests if ev.success]
        sels = [ev for ev in win if ev.kind is PK.NS_SELECTION]
        sels_ok = [ev for ev in sels if ev.success]
        rels = [ev for ev in win if ev.kind is PK.PDU_SESSION_RELEASE and ev.success]
        gauge = gauge_at(hi)
        out[w] = (
            len(regs_ok) / len(regs) if regs else 1.0,
            len(ests_ok) / len(ests) if ests else 1.0,
            sum(gauge) / num_slices,
            max(gauge),
            len(regs),
            len(regs_ok),
            len(svcs),
            len(svcs_ok),
            len(ests),
            len(ests_ok),
            len(ests) - len(ests_ok),
            max((ev.latency_ms for ev in ests_ok), default=0.0),
            len(rels),
            len(sels),
            len(sels_ok),
            len(sels) - len(sels_ok),
            len(regs) - len(regs_ok),
        )
    return out


def central_difference_grads(
    loss_fn: Callable[[], float],
    params: list[np.ndarray],
    eps: float = 1e-5,
) -> list[np.ndarray]:
    """Finite-difference gradient of loss_fn w.r.t. each array, in place."""
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_grad_error(
    analytic: list[np.ndarray],
    numeric: list[np.ndarray],
    abs_floor: float = 1e-6,
) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), abs_floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_toy_model(arch, rng: np.random.Generator):
    """A small autoencoder with fully randomized parameters.

    Biases are randomized too: zero biases can park ReLU inputs exactly on
    the kink, where the loss is not differentiable and a central difference
    halves the active-side slope.
    """
    from .autoencoder import AutoencoderModel

    model = AutoencoderModel.initialize(arch, rng)
    for _, arr in model.parameters():
        arr[...] = rng.uniform(-0.6, 0.6, size=arr.shape)
    return model


def brute_force_two_partition(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Exhaustive best 2-cluster partition by within-cluster sum of squares.

    Point 0 is pinned to cluster 0 to halve the label-symmetric search space;
    single-cluster splits (one side empty) are included for completeness.
    """
    n = points.shape[0]
    best_inertia = math.inf
    best_assign = np.zeros(n, dtype=int)
    for mask_bits in range(2 ** (n - 1)):
        assign = np.zeros(n, dtype=int)
        for j in range(1, n):
            assign[j] = (mask_bits >> (j - 1)) & 1
        inertia = 0.0
        for c in (0, 1):
            members = points[assign == c]
            if len(members):
                center = members.mean(axis=0)
                inertia += float(((members - center) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_assign = assign
    return best_inertia, best_assign


def run_selfcheck(seed: int = 0) -> dict[str, dict]:
    """Run the three oracle suites at reduced scale; returns per-suite results."""
    from . import autoencoder, kmeans
    from .features import compute_window_features
    from .sim import NetworkConfig, simulate_scenario

    results: dict[str, dict] = {}

    cfg = NetworkConfig(emulation_duration=240.0, attack_start=120.0)
    mismatches = 0
    checked = 0
    for scenario, s in (("benign", seed + 1), ("rsa", seed + 2), ("tsa", seed + 3)):
        trace = simulate_scenario(scenario, cfg, seed=s)
        fast = compute_window_features(trace, window=1.0).values
        slow = naive_window_features(trace, window=1.0)
        checked += fast.shape[0]
        mismatches += int(np.sum(~np.all(np.isclose(fast, slow, rtol=1e-12, atol=0.0), axis=1)))
    results["feature_counters"] = {
        "passed": mismatches == 0,
        "windows_checked": checked,
        "mismatching_windows": mismatches,
    }

    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(3):
        arch = autoencoder.AutoencoderArch(
            input_dim=3, encoder_units=(4, 3), decoder_units=(3, 4), lookback=2
        )
        model = random_toy_model(arch, np.random.default_rng(seed + i))
        x = rng.uniform(0.0, 1.0, size=(2, arch.lookback, arch.input_dim))
        _, analytic = model.loss_gradients(x)
        arrays = [arr for _, arr in model.parameters()]
        numeric = central_difference_grads(lambda: model.loss(x), arrays)
        worst = max(worst, max_relative_grad_error([g for _, g in analytic], numeric))
    results["gradient_check"] = {"passed": worst < 1e-4, "max_relative_error": worst}

    py_rng = random.Random(seed)
    optimal = 0
    trials = 20
    monotone = True
    for _ in range(trials):
        n = py_rng.randint(4, 8)
        d = py_rng.randint(1, 4)
        pts = np.asarray([[py_rng.gauss(0, 1) for _ in range(d)] for _ in range(n)])
        result = kmeans.kmeans_fit(pts, kmeans.KMeansConfig(seed=py_rng.randint(0, 10**6)))
        ref_inertia, _ = brute_force_two_partition(pts)
        if result.inertia <= ref_inertia * (1 + 1e-9) + 1e-12:
            optimal += 1
        hist = np.asarray(result.inertia_history)
        if np.any(np.diff(hist) > 1e-9):
            monotone = False
    results["kmeans_brute_force"] = {
        "passed": optimal >= int(0.95 * trials) and monotone,
        "optimal": optimal,
        "trials": trials,
        "inertia_monotone": monotone,
    }
    return results
