"""Detection metrics and the contamination sweep.

Attack is the positive class. The sweep builds one training dataset per
contamination level and seed, trains the autoencoder once per cell (the PUL
detector and the threshold baseline share it), and scores both detectors on
RSA and TSA test sets built from disjoint trace seeds.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autoencoder import TrainConfig
from .baseline import BaselineDetector, ThresholdConfig
from .datasets import (
    TRUTH_ATTACK,
    DatasetSpec,
    PoolBudget,
    assemble_test,
    assemble_training,
    simulate_pools,
)
from .detector import train_detector
from .kmeans import KMeansConfig
from .sim import NetworkConfig

# F1 ranges measured on the original hardware testbed, kept in reports for context.
TESTBED_REFERENCE = {
    "pul_f1_range": (0.9850, 0.9934),
    "baseline_f1_range": (0.5311, 0.8074),
}

SWEEP_FORMAT = "slicewarden-sweep/1"


class EvaluationError(ValueError):
    """Raised on malformed metric inputs."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    confusion: ConfusionMatrix
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()  # which metrics hit a zero denominator


def score(verdicts: Sequence[str], truth: Sequence[str]) -> Metrics:
    """Precision/recall/F1 with attack as the positive class.

    Zero-denominator metrics are reported as 0.0 and flagged.
    """
    if len(verdicts) != len(truth):
        raise EvaluationError(f"got {len(verdicts)} verdicts for {len(truth)} truth labels")
    tp = fp = tn = fn = 0
    for v, t in zip(verdicts, truth):
        pred_attack = v == TRUTH_ATTACK
        is_attack = t == TRUTH_ATTACK
        if pred_attack and is_attack:
            tp += 1
        elif pred_attack:
            fp += 1
        elif is_attack:
            fn += 1
        else:
            tn += 1
    degenerate = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return Metrics(ConfusionMatrix(tp, fp, tn, fn), precision, recall, f1, tuple(degenerate))


def _dataset_seed(master: int, level: float) -> int:
    return master * 1_000 + int(round(level * 100))


def run_sweep(
    levels: Sequence[float] = (0.10, 0.20, 0.30, 0.40),
    total: int = 8000,
    test_total: int = 2000,
    seeds: Sequence[int] = (1, 2, 3),
    sim_config: Optional[NetworkConfig] = None,
    window: float = 1.0,
    train_config: TrainConfig = TrainConfig(),
    kmeans_config: KMeansConfig = KMeansConfig(),
    labeled_positive_fraction: float = 0.10,
) -> dict:
    """Train and score both detectors at each contamination level and seed.

    Deterministic for a given argument set; the report embeds no wall-clock
    values so repeated runs serialize byte-identically.
    """
    levels = sorted(levels)
    if sim_config is None:
        sim_config = NetworkConfig(emulation_duration=1200.0, attack_start=600.0)
    max_level = max(levels)
    cells = []
    for master in seeds:
        train_budget = PoolBudget(
            benign_rows=int(total * (1 - min(levels))),
            rsa_rows=int(np.ceil(total * max_level / 2)),
            tsa_rows=int(np.ceil(total * max_level / 2)),
        )
        train_pools = simulate_pools(train_budget, master, "train", sim_config, window)
        test_budget = PoolBudget(
            benign_rows=test_total,
            rsa_rows=test_total // 2,
            tsa_rows=test_total // 2,
        )
        test_pools = simulate_pools(test_budget, master, "test", sim_config, window)

        train_sets = {}
        for level in levels:
            spec = DatasetSpec(
                total_records=total,
                contamination=level,
                labeled_positive_fraction=labeled_positive_fraction,
                seed=_dataset_seed(master, level),
            )
            train_sets[level] = assemble_training(
                train_pools["benign"], train_pools["rsa"], train_pools["tsa"], spec
            )

        train_provenance = set()
        for ds in train_sets.values():
            train_provenance |= ds.provenance_keys()
        test_sets = {
            variant: assemble_test(
                test_pools["benign"],
                test_pools[variant],
                variant,
                total=test_total,
                seed=_dataset_seed(master, 0.5 if variant == "rsa" else 0.6),
                exclude=train_provenance,
            )
            for variant in ("rsa", "tsa")
        }

        for level in levels:
            ds = train_sets[level]
            cell_train_cfg = replace(train_config, seed=_dataset_seed(master, level))
            detectors = train_detector(ds, None, cell_train_cfg, kmeans_config)
            baseline = BaselineDetector(
                detector=detectors.pul,
                threshold=ThresholdConfig(),
                alpha_calibrated=detectors.baseline_alpha_calibrated,
            )
            for variant, test_ds in test_sets.items():
                pul_metrics = score(detectors.pul.predict(test_ds.features), test_ds.truth)
                base_metrics = score(
                    baseline.predict(test_ds.features, use_calibrated=True), test_ds.truth
                )
                for name, metrics in (("pul", pul_metrics), ("baseline", base_metrics)):
                    cells.append(
                        {
                            "level": level,
                            "seed": master,
                            "detector": name,
                            "test_set": variant,
                            "precision": metrics.precision,
                            "recall": metrics.recall,
                            "f1": metrics.f1,
                            "confusion": asdict(metrics.confusion),
                            "train_epochs": detectors.pul.model.history.get("epochs_run"),
                            "alpha_calibrated": detectors.baseline_alpha_calibrated,
                        }
                    )

    aggregates = []
    for level in levels:
        for detector in ("pul", "baseline"):
            for variant in ("rsa", "tsa"):
                sel = [
                    c
                    for c in cells
                    if c["level"] == level and c["detector"] == detector and c["test_set"] == variant
                ]
                aggregates.append(
                    {
                        "level": level,
                        "detector": detector,
                        "test_set": variant,
                        "precision": float(np.mean([c["precision"] for c in sel])),
                        "recall": float(np.mean([c["recall"] for c in sel])),
                        "f1": float(np.mean([c["f1"] for c in sel])),
                        "f1_std": float(np.std([c["f1"] for c in sel])),
                    }
                )

    config_obj = {
        "levels": list(levels),
        "total": total,
        "test_total": test_total,
        "seeds": list(seeds),
        "window": window,
        "sim_config": asdict(sim_config),
        "train_config": asdict(train_config),
        "kmeans_config": asdict(kmeans_config),
        "labeled_positive_fraction": labeled_positive_fraction,
        "baseline_mode": "alpha calibrated at the 95th percentile of training errors",
    }
    config_digest = hashlib.sha256(
        json.dumps(config_obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return {
        "format": SWEEP_FORMAT,
        "config": config_obj,
        "config_digest": config_digest,
        "cells": cells,
        "aggregate": aggregates,
        "testbed_reference": {k: list(v) for k, v in TESTBED_REFERENCE.items()},
    }


def mean_f1(report: dict, level: float, detector: str) -> float:
    """Mean F1 over seeds and both test sets at one contamination level."""
    rows = [
        c for c in report["cells"] if c["level"] == level and c["detector"] == detector
    ]
    if not rows:
        raise EvaluationError(f"no sweep cells for level={level} detector={detector}")
    return float(np.mean([c["f1"] for c in rows]))


def write_report(report: dict, out_dir: str | Path) -> dict[str, str]:
    """Write report.json and the flat report.csv; returns their digests."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    data = (json.dumps(report, sort_keys=True, separators=(",", ":")) + "\n").encode()
    json_path.write_bytes(data)

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("level", "detector", "test_set", "precision", "recall", "f1"))
        for row in report["aggregate"]:
            writer.writerow(
                (
                    repr(row["level"]),
                    row["detector"],
                    row["test_set"],
                    repr(row["precision"]),
                    repr(row["recall"]),
                    repr(row["f1"]),
                )
            )
    return {
        "report.json": hashlib.sha256(data).hexdigest(),
        "report.csv": hashlib.sha256(csv_path.read_bytes()).hexdigest(),
    }
