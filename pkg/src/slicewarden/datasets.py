"""Training/test dataset assembly with controlled contamination.

Training sets mix benign rows with RSA/TSA rows at a chosen contamination
fraction and carry a SCAR-labeled subset of benign rows (the labeled
positives). Test sets are half benign, half one attack variant. Row
provenance (source trace digest + window start) keys the train/test
disjointness guarantee.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.metrics import silhouette_score

from .features import (
    FEATURE_NAMES,
    LABEL_BENIGN,
    NUM_FEATURES,
    FeatureMatrix,
    compute_window_features,
)
from .sim import ConfigError, NetworkConfig, simulate_scenario

TRUTH_BENIGN = "benign"
TRUTH_ATTACK = "attack"

DATASET_FORMAT = "slicewarden-dataset/1"

# Seed-derivation namespaces for pool simulation runs.
_STREAM_OFFSETS = {
    ("train", "benign"): 0,
    ("train", "rsa"): 100_000,
    ("train", "tsa"): 200_000,
    ("test", "benign"): 300_000,
    ("test", "rsa"): 400_000,
    ("test", "tsa"): 500_000,
}


def derive_seed(master: int, split: str, scenario: str, index: int) -> int:
    if index >= 100_000:
        raise ConfigError("pool run index out of the seed namespace")
    return master * 1_000_000 + _STREAM_OFFSETS[(split, scenario)] + index


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for one contaminated training dataset."""

    total_records: int
    contamination: float
    rsa_tsa_split: float = 0.5
    labeled_positive_fraction: float = 0.10
    seed: int = 0

    def validate(self) -> None:
        if self.total_records < 1:
            raise ConfigError("total_records must be positive")
        if not 0 <= self.contamination < 1:
            raise ConfigError("contamination must be in [0, 1)")
        if not 0 <= self.rsa_tsa_split <= 1:
            raise ConfigError("rsa_tsa_split must be in [0, 1]")
        if not 0 <= self.labeled_positive_fraction <= 1 - self.contamination:
            raise ConfigError(
                "labeled_positive_fraction must not exceed 1 - contamination "
                f"(got {self.labeled_positive_fraction} with contamination {self.contamination})"
            )

    def counts(self) -> tuple[int, int, int, int]:
        """(benign, rsa, tsa, labeled) row counts."""
        n_attack = int(round(self.total_records * self.contamination))
        n_rsa = int(round(n_attack * self.rsa_tsa_split))
        n_tsa = n_attack - n_rsa
        n_benign = self.total_records - n_attack
        n_labeled = int(round(self.total_records * self.labeled_positive_fraction))
        return n_benign, n_rsa, n_tsa, n_labeled

    def to_json_obj(self) -> dict:
        return {
            "total_records": self.total_records,
            "contamination": self.contamination,
            "rsa_tsa_split": self.rsa_tsa_split,
            "labeled_positive_fraction": self.labeled_positive_fraction,
            "seed": self.seed,
        }


@dataclass
class Dataset:
    """Feature rows with ground truth, the labeled-positive mask and provenance."""

    features: np.ndarray  # (n, NUM_FEATURES)
    truth: list[str]  # TRUTH_BENIGN | TRUTH_ATTACK
    labeled_mask: np.ndarray  # bool (n,)
    trace_digests: list[str]
    window_starts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def attack_mask(self) -> np.ndarray:
        return np.asarray([t == TRUTH_ATTACK for t in self.truth])

    def provenance_keys(self) -> set[tuple[str, float]]:
        return {
            (d, float(w)) for d, w in zip(self.trace_digests, self.window_starts)
        }


class _RowPool:
    """Flattened rows of one or more feature matrices, with provenance."""

    def __init__(self, matrices: Sequence[FeatureMatrix], allowed_labels: set[str], name: str):
        self.name = name
        rows, digests, starts = [], [], []
        for m in matrices:
            bad = set(m.labels) - allowed_labels
            if bad:
                raise ConfigError(f"{name} pool contains rows labeled {sorted(bad)}")
            rows.append(m.values)
            digests.extend([m.source_digest] * len(m))
            starts.append(m.window_starts)
        self.values = np.vstack(rows) if rows else np.zeros((0, NUM_FEATURES))
        self.digests = digests
        self.starts = np.concatenate(starts) if starts else np.zeros(0)

    def __len__(self) -> int:
        return self.values.shape[0]

    def take(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, list[str], np.ndarray]:
        if count > len(self):
            raise ConfigError(
                f"{self.name} pool has {len(self)} rows, {count} required"
            )
        idx = rng.choice(len(self), size=count, replace=False)
        return (
            self.values[idx],
            [self.digests[i] for i in idx],
            self.starts[idx],
        )


def attack_rows(matrix: FeatureMatrix, variant: str) -> FeatureMatrix:
    """Rows from the attack window only; pre-attack rows are discarded."""
    idx = [i for i, lab in enumerate(matrix.labels) if lab == variant]
    return matrix.subset(idx)


def benign_rows(matrix: FeatureMatrix) -> FeatureMatrix:
    idx = [i for i, lab in enumerate(matrix.labels) if lab == LABEL_BENIGN]
    return matrix.subset(idx)


def assemble_training(
    benign_pool: Sequence[FeatureMatrix],
    rsa_pool: Sequence[FeatureMatrix],
    tsa_pool: Sequence[FeatureMatrix],
    spec: DatasetSpec,
) -> Dataset:
    """Mix pools per the spec; labeled positives drawn uniformly from benign rows."""
    spec.validate()
    n_benign, n_rsa, n_tsa, n_labeled = spec.counts()
    pools = (
        _RowPool(benign_pool, {LABEL_BENIGN}, "benign"),
        _RowPool(rsa_pool, {"rsa"}, "rsa"),
        _RowPool(tsa_pool, {"tsa"}, "tsa"),
    )
    rng = np.random.default_rng(spec.seed)
    parts = []
    for pool, count, truth in zip(pools, (n_benign, n_rsa, n_tsa), (TRUTH_BENIGN, TRUTH_ATTACK, TRUTH_ATTACK)):
        values, digests, starts = pool.take(rng, count)
        parts.append((values, digests, starts, truth))

    features = np.vstack([p[0] for p in parts])
    digests = [d for p in parts for d in p[1]]
    starts = np.concatenate([p[2] for p in parts])
    truth = [p[3] for p in parts for _ in range(len(p[1]))]

    labeled = np.zeros(spec.total_records, dtype=bool)
    labeled[rng.choice(n_benign, size=n_labeled, replace=False)] = True  # SCAR over benign rows

    perm = rng.permutation(spec.total_records)
    return Dataset(
        features=features[perm],
        truth=[truth[i] for i in perm],
        labeled_mask=labeled[perm],
        trace_digests=[digests[i] for i in perm],
        window_starts=starts[perm],
        meta={
            "kind": "training",
            "spec": spec.to_json_obj(),
            "counts": {"benign": n_benign, "rsa": n_rsa, "tsa": n_tsa, "labeled": n_labeled},
            "pool_digests": sorted({d for d in digests}),
        },
    )


def assemble_test(
    benign_pool: Sequence[FeatureMatrix],
    attack_pool: Sequence[FeatureMatrix],
    variant: str,
    total: int = 20000,
    seed: int = 0,
    exclude: Optional[Iterable[tuple[str, float]]] = None,
) -> Dataset:
    """Half benign, half `variant` attack rows; no labeled positives.

    `exclude` holds (trace_digest, window_start) keys of any training dataset;
    overlap raises, enforcing mutually exclusive train/test rows.
    """
    if variant not in ("rsa", "tsa"):
        raise ConfigError(f"unknown attack variant: {variant}")
    if total < 2 or total % 2:
        raise ConfigError("test dataset total must be a positive even count")
    half = total // 2
    rng = np.random.default_rng(seed)
    bpool = _RowPool(benign_pool, {LABEL_BENIGN}, "benign")
    apool = _RowPool(attack_pool, {variant}, variant)
    b_values, b_digests, b_starts = bpool.take(rng, half)
    a_values, a_digests, a_starts = apool.take(rng, half)

    features = np.vstack([b_values, a_values])
    digests = b_digests + a_digests
    starts = np.concatenate([b_starts, a_starts])
    truth = [TRUTH_BENIGN] * half + [TRUTH_ATTACK] * half
    perm = rng.permutation(total)

    ds = Dataset(
        features=features[perm],
        truth=[truth[i] for i in perm],
        labeled_mask=np.zeros(total, dtype=bool),
        trace_digests=[digests[i] for i in perm],
        window_starts=starts[perm],
        meta={
            "kind": "test",
            "variant": variant,
            "counts": {"benign": half, variant: half},
            "seed": seed,
        },
    )
    if exclude is not None:
        overlap = ds.provenance_keys() & set(exclude)
        if overlap:
            raise ConfigError(
                f"test dataset overlaps training provenance on {len(overlap)} rows"
            )
    return ds


# -- PUL assumption checks ----------------------------------------------------


def pca_project(values: np.ndarray, dims: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Principal-component projection: center, eigendecompose the covariance,
    project onto the top components. Component signs are fixed so the largest
    absolute loading is positive, making the output deterministic.

    Returns (coordinates (n, dims), explained-variance ratios (dims,)).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < max(2, dims):
        raise ConfigError(f"need at least {max(2, dims)} rows for a {dims}-D projection")
    if dims < 1 or dims > values.shape[1]:
        raise ConfigError("dims must be in [1, n_features]")
    centered = values - values.mean(axis=0)
    cov = np.cov(centered, rowvar=False, ddof=1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order[:dims]]
    for j in range(dims):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    coords = centered @ components
    total = eigvals.sum()
    ratios = eigvals[:dims] / total if total > 0 else np.zeros(dims)
    return coords, ratios


def separability_silhouette(
    coords: np.ndarray,
    truth: Sequence[str],
    max_points: int = 4000,
    seed: int = 0,
) -> float:
    """Silhouette of the truth labels in projected space (deterministic subsample)."""
    labels = np.asarray([t == TRUTH_ATTACK for t in truth], dtype=int)
    if len(set(labels.tolist())) < 2:
        raise ConfigError("silhouette needs both classes present")
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(coords.shape[0], max_points, replace=False)
        coords, labels = coords[idx], labels[idx]
    return float(silhouette_score(coords, labels))


# -- pool generation ----------------------------------------------------------


@dataclass(frozen=True)
class PoolBudget:
    """Row targets for one split's pools."""

    benign_rows: int
    rsa_rows: int
    tsa_rows: int


def simulate_pools(
    budget: PoolBudget,
    master_seed: int,
    split: str,
    config: Optional[NetworkConfig] = None,
    window: float = 1.0,
) -> dict[str, list[FeatureMatrix]]:
    """Simulate enough runs to cover the budget; attack pools keep only
    attack-window rows. Train/test splits draw from disjoint seed namespaces."""
    if config is None:
        config = NetworkConfig(emulation_duration=1200.0, attack_start=600.0)
    benign_per_run = int(config.emulation_duration // window)
    attack_per_run = int((config.emulation_duration - config.attack_start) // window)
    pools: dict[str, list[FeatureMatrix]] = {"benign": [], "rsa": [], "tsa": []}

    def runs_needed(rows: int, per_run: int) -> int:
        return 0 if rows <= 0 else -(-rows // per_run)

    for i in range(runs_needed(budget.benign_rows, benign_per_run)):
        trace = simulate_scenario("benign", config, derive_seed(master_seed, split, "benign", i))
        pools["benign"].append(compute_window_features(trace, window))
    for variant, rows in (("rsa", budget.rsa_rows), ("tsa", budget.tsa_rows)):
        for i in range(runs_needed(rows, attack_per_run)):
            trace = simulate_scenario(variant, config, derive_seed(master_seed, split, variant, i))
            pools[variant].append(attack_rows(compute_window_features(trace, window), variant))
    return pools


# -- serialization --------------------------------------------------------------


def write_dataset(dataset: Dataset, csv_path: str | Path) -> tuple[str, str]:
    """Write rows to CSV and metadata to a .meta.json sidecar; returns digests."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow((*FEATURE_NAMES, "truth", "labeled_mask", "trace_digest", "window_start"))
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.extend(
                (
                    dataset.truth[i],
                    "true" if dataset.labeled_mask[i] else "false",
                    dataset.trace_digests[i],
                    repr(float(dataset.window_starts[i])),
                )
            )
            writer.writerow(row)
    csv_digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()

    meta_path = csv_path.with_suffix(".meta.json")
    meta = {"format": DATASET_FORMAT, "rows": len(dataset), **dataset.meta}
    meta_bytes = (json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n").encode()
    meta_path.write_bytes(meta_bytes)
    return csv_digest, hashlib.sha256(meta_bytes).hexdigest()


def read_dataset(csv_path: str | Path) -> Dataset:
    csv_path = Path(csv_path)
    with open(csv_path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = (*FEATURE_NAMES, "truth", "labeled_mask", "trace_digest", "window_start")
        if tuple(header) != expected:
            raise ConfigError(f"unexpected dataset CSV header in {csv_path}")
        features, truth, labeled, digests, starts = [], [], [], [], []
        for rec in reader:
            features.append([float(v) for v in rec[:NUM_FEATURES]])
            truth.append(rec[NUM_FEATURES])
            labeled.append(rec[NUM_FEATURES + 1] == "true")
            digests.append(rec[NUM_FEATURES + 2])
            starts.append(float(rec[NUM_FEATURES + 3]))
    meta_path = csv_path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Dataset(
        features=np.asarray(features, dtype=float).reshape(len(features), NUM_FEATURES),
        truth=truth,
        labeled_mask=np.asarray(labeled, dtype=bool),
        trace_digests=digests,
        window_starts=np.asarray(starts, dtype=float),
        meta=meta,
    )
