"""Reconstruction-error threshold baseline.

The same autoencoder, classifying by comparing each row's mean squared
reconstruction error against a fixed threshold alpha. Contaminated training
data teaches the model to reconstruct attacks too, which is exactly the
degradation this baseline exists to demonstrate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderModel
from .datasets import TRUTH_ATTACK, TRUTH_BENIGN
from .detector import PulDetector
from .features import windowize

DEFAULT_ALPHA = 0.1408


@dataclass(frozen=True)
class ThresholdConfig:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def reconstruction_error(model: AutoencoderModel, sequences: np.ndarray) -> np.ndarray:
    """Per-sequence mean squared error between input and reconstruction."""
    return model.reconstruction_errors(sequences)


def classify_threshold(err: float | np.ndarray, config: ThresholdConfig) -> str | list[str]:
    """Benign iff the error does not exceed alpha (boundary counts as benign)."""
    if np.isscalar(err):
        if err < 0:
            raise ValueError("reconstruction error must be non-negative")
        return TRUTH_BENIGN if err <= config.alpha else TRUTH_ATTACK
    errs = np.asarray(err, dtype=float)
    if np.any(errs < 0):
        raise ValueError("reconstruction error must be non-negative")
    return [TRUTH_BENIGN if e <= config.alpha else TRUTH_ATTACK for e in errs]


@dataclass
class BaselineDetector:
    """Threshold classifier sharing the PUL detector's model and preprocessing.

    alpha_calibrated holds the 95th percentile of training reconstruction
    errors, fitted at training time for data whose error scale differs from
    the environment the fixed default was tuned on.
    """

    detector: PulDetector
    threshold: ThresholdConfig = ThresholdConfig()
    alpha_calibrated: float | None = None

    def errors(self, features: np.ndarray) -> np.ndarray:
        selected = self.detector.preprocess(features)
        return reconstruction_error(self.detector.model, windowize(selected, self.detector.lookback))

    def predict(self, features: np.ndarray, use_calibrated: bool = False) -> list[str]:
        config = self.threshold
        if use_calibrated:
            if self.alpha_calibrated is None:
                raise ValueError("no calibrated alpha stored in this detector bundle")
            config = ThresholdConfig(alpha=self.alpha_calibrated)
        return classify_threshold(self.errors(features), config)
