"""K-means with k-means++ seeding, written for introspectable convergence.

The best of n_init restarts (by final inertia) is returned together with the
per-iteration inertia history of that run, so callers can assert the
monotonicity Lloyd's algorithm guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    """Raised when the input cannot support the requested clustering."""


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 2
    init: str = "k-means++"
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    seed: int = 42

    def __post_init__(self) -> None:
        if self.k < 1 or self.n_init < 1 or self.max_iter < 1:
            raise ClusteringError("k, n_init and max_iter must be positive")
        if self.init not in ("k-means++", "random"):
            raise ClusteringError(f"unknown init method: {self.init}")
        if self.tol < 0:
            raise ClusteringError("tol must be non-negative")


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,)
    inertia: float
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared euclidean distances, computed stably."""
    diffs = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diffs, diffs)


def _init_centroids(points: np.ndarray, cfg: KMeansConfig, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    if cfg.init == "random":
        idx = rng.choice(n, size=cfg.k, replace=False)
        return points[idx].copy()
    # k-means++: D^2 sampling of successive seeds.
    centroids = np.empty((cfg.k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, cfg.k):
        total = closest.sum()
        if total <= 0:  # all remaining mass on existing seeds; pick any distinct point
            centroids[j] = points[rng.integers(n)]
            continue
        probs = closest / total
        centroids[j] = points[rng.choice(n, p=probs)]
        closest = np.minimum(closest, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, cfg: KMeansConfig) -> KMeansResult:
    history = []
    assignments = np.zeros(points.shape[0], dtype=int)
    for iteration in range(1, cfg.max_iter + 1):
        dists = _squared_distances(points, centroids)
        assignments = np.argmin(dists, axis=1)
        inertia = float(dists[np.arange(points.shape[0]), assignments].sum())
        history.append(inertia)
        new_centroids = centroids.copy()
        for c in range(cfg.k):
            members = points[assignments == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:
                # Re-seed an emptied cluster with the point farthest from its centroid.
                worst = np.argmax(dists[np.arange(points.shape[0]), assignments])
                new_centroids[c] = points[worst]
        shift = float(((new_centroids - centroids) ** 2).sum())
        centroids = new_centroids
        if shift <= cfg.tol:
            break
    dists = _squared_distances(points, centroids)
    assignments = np.argmin(dists, axis=1)
    inertia = float(dists[np.arange(points.shape[0]), assignments].sum())
    history.append(inertia)
    return KMeansResult(centroids, assignments, inertia, iteration, history)


def kmeans_fit(points: np.ndarray, config: KMeansConfig = KMeansConfig()) -> KMeansResult:
    """Best-of-n_init k-means; deterministic for a given config seed."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ClusteringError("points must be a 2-D array")
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < config.k:
        raise ClusteringError(
            f"need at least {config.k} distinct points, got {distinct.shape[0]}"
        )
    rng = np.random.default_rng(config.seed)
    best: KMeansResult | None = None
    for _ in range(config.n_init):
        centroids = _init_centroids(points, config, rng)
        result = _lloyd(points, centroids, config)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the closest centroid per point; ties break to the lower index."""
    return np.argmin(_squared_distances(np.asarray(points, dtype=float), centroids), axis=1)
