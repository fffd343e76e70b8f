"""The PU-learning detector: autoencoder latent features clustered by k-means.

Training runs the whole contaminated dataset (labeled and unlabeled rows
alike) through the autoencoder, clusters the encoder's latent codes into two
groups, and names the cluster holding the majority of the labeled positives
as benign. Prediction encodes new rows and assigns them to the nearest
centroid.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autoencoder import AutoencoderArch, AutoencoderModel, TrainConfig, train_autoencoder
from .datasets import TRUTH_ATTACK, TRUTH_BENIGN, Dataset
from .features import (
    NormalizerParams,
    apply_normalizer,
    fit_normalizer,
    variance_threshold_select,
    windowize,
)
from .kmeans import KMeansConfig, kmeans_fit, nearest_centroid

DETECTOR_FORMAT = "slicewarden-detector/1"


class DetectorError(ValueError):
    """Raised when a detector cannot be built or applied."""


def assign_cluster_labels(assignments: np.ndarray, labeled_mask: np.ndarray) -> dict[int, str]:
    """Map cluster index -> class using the labeled positives.

    The cluster holding the majority of labeled positives is benign; an exact
    tie breaks to cluster 0 as benign.
    """
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    if labeled_mask.sum() == 0:
        raise DetectorError("PU labeling requires at least one labeled positive row")
    labeled_clusters = np.asarray(assignments)[labeled_mask]
    count0 = int(np.sum(labeled_clusters == 0))
    count1 = int(np.sum(labeled_clusters == 1))
    benign = 0 if count0 >= count1 else 1
    return {benign: TRUTH_BENIGN, 1 - benign: TRUTH_ATTACK}


@dataclass
class PulDetector:
    """Trained encoder + centroids + cluster naming + preprocessing state."""

    model: AutoencoderModel
    normalizer: NormalizerParams
    selected: np.ndarray
    centroids: np.ndarray
    cluster_to_class: dict[int, str]
    kmeans_config: KMeansConfig = KMeansConfig()

    def __post_init__(self) -> None:
        classes = sorted(self.cluster_to_class.values())
        if classes != [TRUTH_ATTACK, TRUTH_BENIGN]:
            raise DetectorError("cluster_to_class must map the two clusters to the two classes")

    @property
    def lookback(self) -> int:
        return self.model.arch.lookback

    def preprocess(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[1] != self.normalizer.mins.shape[0]:
            raise DetectorError(
                f"expected (n, {self.normalizer.mins.shape[0]}) feature rows, got {features.shape}"
            )
        normalized = apply_normalizer(features, self.normalizer)
        return normalized[:, self.selected]

    def encode_rows(self, features: np.ndarray) -> np.ndarray:
        selected = self.preprocess(features)
        if np.any(selected < -0.5) or np.any(selected > 1.5):
            warnings.warn("input rows fall far outside the normalized range [0, 1]")
        return self.model.encode(windowize(selected, self.lookback))

    def predict(self, features: np.ndarray) -> list[str]:
        """Verdict per row; rows map 1:1 with lookback 1."""
        if self.lookback != 1:
            raise DetectorError("row-wise predict requires lookback 1; use encode_rows directly")
        latents = self.encode_rows(features)
        clusters = nearest_centroid(latents, self.centroids)
        return [self.cluster_to_class[int(c)] for c in clusters]


@dataclass
class TrainedDetectors:
    """The detector pair sharing one trained autoencoder."""

    pul: PulDetector
    baseline_alpha_calibrated: float
    training_errors: np.ndarray
    latents: np.ndarray
    assignments: np.ndarray
    inertia: float


def train_detector(
    dataset: Dataset,
    arch: Optional[AutoencoderArch] = None,
    train_config: TrainConfig = TrainConfig(),
    kmeans_config: KMeansConfig = KMeansConfig(),
    variance_tau: float = 1e-6,
    calibration_percentile: float = 95.0,
) -> TrainedDetectors:
    """Full training pipeline on one contaminated dataset.

    Normalizes, variance-selects, trains the autoencoder on every row,
    clusters the latent codes (k=2) and names clusters from the labeled
    positives. Also calibrates the baseline threshold on the training
    reconstruction errors.
    """
    if len(dataset) < 2:
        raise DetectorError("training dataset too small")
    normalizer = fit_normalizer(dataset.features)
    normalized = apply_normalizer(dataset.features, normalizer)
    selected_idx = variance_threshold_select(normalized, variance_tau)
    selected = normalized[:, selected_idx]

    lookback = arch.lookback if arch is not None else 1
    sequences = windowize(selected, lookback)
    if arch is None:
        arch = AutoencoderArch(input_dim=selected.shape[1], lookback=lookback)
    model = train_autoencoder(sequences, arch, train_config)

    latents = model.encode(sequences)
    km = kmeans_fit(latents, kmeans_config)
    # Sequence i ends at row i + lookback - 1; align masks with sequence ends.
    labeled_mask = dataset.labeled_mask[lookback - 1 :]
    mapping = assign_cluster_labels(km.assignments, labeled_mask)

    errors = model.reconstruction_errors(sequences)
    alpha_cal = float(np.percentile(errors, calibration_percentile))

    pul = PulDetector(
        model=model,
        normalizer=normalizer,
        selected=selected_idx,
        centroids=km.centroids,
        cluster_to_class=mapping,
        kmeans_config=kmeans_config,
    )
    return TrainedDetectors(
        pul=pul,
        baseline_alpha_calibrated=alpha_cal,
        training_errors=errors,
        latents=latents,
        assignments=km.assignments,
        inertia=km.inertia,
    )


# -- bundle serialization -------------------------------------------------------


def detector_bundle_obj(detectors: TrainedDetectors, extra_meta: Optional[dict] = None) -> dict:
    pul = detectors.pul
    obj = {
        "format": DETECTOR_FORMAT,
        "model": pul.model.to_json_obj(),
        "normalizer": pul.normalizer.to_json_obj(),
        "selected": pul.selected.tolist(),
        "centroids": pul.centroids.tolist(),
        "cluster_to_class": {str(k): v for k, v in pul.cluster_to_class.items()},
        "kmeans": {
            "k": pul.kmeans_config.k,
            "init": pul.kmeans_config.init,
            "n_init": pul.kmeans_config.n_init,
            "max_iter": pul.kmeans_config.max_iter,
            "tol": pul.kmeans_config.tol,
            "seed": pul.kmeans_config.seed,
        },
        "baseline_alpha_calibrated": detectors.baseline_alpha_calibrated,
        "inertia": detectors.inertia,
    }
    if extra_meta:
        obj["meta"] = extra_meta
    return obj


def save_detector(detectors: TrainedDetectors, path: str | Path, extra_meta: Optional[dict] = None) -> str:
    data = (
        json.dumps(detector_bundle_obj(detectors, extra_meta), sort_keys=True, separators=(",", ":"))
        + "\n"
    ).encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_detector(path: str | Path) -> tuple[PulDetector, float]:
    """Returns the PUL detector and the calibrated baseline threshold."""
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != DETECTOR_FORMAT:
        raise DetectorError(f"not a {DETECTOR_FORMAT} file: {path}")
    model = AutoencoderModel.from_json_obj(obj["model"])
    km = obj["kmeans"]
    pul = PulDetector(
        model=model,
        normalizer=NormalizerParams.from_json_obj(obj["normalizer"]),
        selected=np.asarray(obj["selected"], dtype=int),
        centroids=np.asarray(obj["centroids"], dtype=float),
        cluster_to_class={int(k): v for k, v in obj["cluster_to_class"].items()},
        kmeans_config=KMeansConfig(
            k=int(km["k"]),
            init=km["init"],
            n_init=int(km["n_init"]),
            max_iter=int(km["max_iter"]),
            tol=float(km["tol"]),
            seed=int(km["seed"]),
        ),
    )
    return pul, float(obj["baseline_alpha_calibrated"])
