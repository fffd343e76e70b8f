"""Per-window KPI and PM-counter features extracted from a signaling trace.

Seventeen features are computed per tumbling granularity window, covering
slice-level registration/session KPIs and AMF/SMF/NSSF procedure counters.
Per-slice quantities are aggregated across slices (rates as pooled
success/attempt ratios, session gauges as mean/max over slices); per-SMF
counters are summed. A window with no attempts of some kind reports the
neutral success rate 1.0.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .events import EventTrace, ProcedureKind, trace_digest

PK = ProcedureKind

FEATURE_NAMES: tuple[str, ...] = (
    "reg_success_rate_ns",
    "pdu_estab_success_rate_ns",
    "mean_pdu_sessions_ns",
    "max_pdu_sessions_ns",
    "amf_init_reg_requests",
    "amf_init_reg_success",
    "amf_service_req_attempted",
    "amf_service_req_success",
    "smf_pdu_create_requests",
    "smf_pdu_create_success",
    "smf_pdu_create_failed",
    "smf_max_pdu_estab_time_ms",
    "smf_pdu_released_amf_initiated",
    "nssf_selection_requests",
    "nssf_selection_success",
    "nssf_selection_failed",
    "amf_init_reg_failed",
)

NUM_FEATURES = len(FEATURE_NAMES)

LABEL_BENIGN = "benign"
LABEL_RSA = "rsa"
LABEL_TSA = "tsa"
LABEL_UNLABELED = "unlabeled"


class FeatureError(ValueError):
    """Raised when feature extraction or selection cannot proceed."""


@dataclass
class FeatureMatrix:
    """Ordered per-window feature rows with labels and provenance."""

    window_starts: np.ndarray  # (n,)
    values: np.ndarray  # (n, NUM_FEATURES) float64
    labels: list[str]
    window: float = 1.0
    source_digest: str = ""

    def __len__(self) -> int:
        return self.values.shape[0]

    def subset(self, indices: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=int)
        return FeatureMatrix(
            window_starts=self.window_starts[idx],
            values=self.values[idx],
            labels=[self.labels[i] for i in idx],
            window=self.window,
            source_digest=self.source_digest,
        )


def _session_release_kinds() -> set[ProcedureKind]:
    return {PK.PDU_SESSION_RELEASE, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION}


def compute_window_features(trace: EventTrace, window: float = 1.0) -> FeatureMatrix:
    """Aggregate a trace into one feature row per tumbling window.

    Active-session gauges are sampled at each window end and carry across
    windows. Rows cover [0, emulation_duration) even where no events fall.
    """
    if window <= 0:
        raise FeatureError("window must be positive")
    num_slices = int(trace.config["num_slices"])
    duration = trace.duration
    n_windows = int(math.ceil(duration / window))
    if not trace.events:
        return FeatureMatrix(
            window_starts=np.zeros(0),
            values=np.zeros((0, NUM_FEATURES)),
            labels=[],
            window=window,
            source_digest=trace_digest(trace),
        )

    release_kinds = _session_release_kinds()
    sessions = np.zeros(num_slices, dtype=np.int64)
    values = np.zeros((n_windows, NUM_FEATURES), dtype=np.float64)
    starts = np.arange(n_windows, dtype=np.float64) * window

    attack_from = trace.attack_window[0] if trace.attack_window else None
    labels = []
    for ws in starts:
        if attack_from is not None and ws >= attack_from:
            labels.append(trace.scenario)
        else:
            labels.append(LABEL_BENIGN)

    ev_idx = 0
    events = trace.events
    n_events = len(events)
    for w in range(n_windows):
        w_end = (w + 1) * window
        reg_req = reg_ok = 0
        svc_req = svc_ok = 0
        est_req = est_ok = 0
        rel_amf = 0
        sel_req = sel_ok = 0
        max_latency = 0.0
        while ev_idx < n_events and events[ev_idx].timestamp < w_end:
            ev = events[ev_idx]
            ev_idx += 1
            ok = ev.success
            kind = ev.kind
            if kind is PK.REGISTRATION:
                reg_req += 1
                reg_ok += ok
            elif kind in (PK.UPLINK, PK.DOWNLINK):
                svc_req += 1
                svc_ok += ok
            elif kind is PK.PDU_SESSION_ESTABLISHMENT:
                est_req += 1
                if ok:
                    est_ok += 1
                    sessions[ev.slice_id] += 1
                    max_latency = max(max_latency, ev.latency_ms)
            elif kind is PK.NS_SELECTION:
                sel_req += 1
                sel_ok += ok
            elif kind in release_kinds:
                if ok:
                    if sessions[ev.slice_id] > 0:
                        sessions[ev.slice_id] -= 1
                    if kind is PK.PDU_SESSION_RELEASE:
                        rel_amf += 1

        values[w] = (
            reg_ok / reg_req if reg_req else 1.0,
            est_ok / est_req if est_req else 1.0,
            float(np.mean(sessions)),
            float(np.max(sessions)),
            reg_req,
            reg_ok,
            svc_req,
            svc_ok,
            est_req,
            est_ok,
            est_req - est_ok,
            max_latency,
            rel_amf,
            sel_req,
            sel_ok,
            sel_req - sel_ok,
            reg_req - reg_ok,
        )

    return FeatureMatrix(
        window_starts=starts,
        values=values,
        labels=labels,
        window=window,
        source_digest=trace_digest(trace),
    )


def variance_threshold_select(values: np.ndarray, tau: float = 1e-6) -> np.ndarray:
    """Indices of columns whose sample variance exceeds tau."""
    if values.size == 0:
        raise FeatureError("cannot select features from an empty matrix")
    variances = np.var(values, axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    selected = np.flatnonzero(variances > tau)
    if selected.size == 0:
        raise FeatureError(f"variance threshold {tau} eliminated every feature (degenerate data)")
    return selected


@dataclass(frozen=True)
class NormalizerParams:
    """Per-feature min/max fitted on training data."""

    mins: np.ndarray
    maxs: np.ndarray

    def to_json_obj(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "NormalizerParams":
        return cls(mins=np.asarray(obj["mins"], dtype=float), maxs=np.asarray(obj["maxs"], dtype=float))


def fit_normalizer(values: np.ndarray) -> NormalizerParams:
    if values.size == 0:
        raise FeatureError("cannot fit a normalizer on an empty matrix")
    return NormalizerParams(mins=values.min(axis=0), maxs=values.max(axis=0))


def apply_normalizer(values: np.ndarray, params: NormalizerParams) -> np.ndarray:
    """Map to (x - min) / (max - min), clamped to [0, 1]; constant columns map to 0."""
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    out = (values - params.mins) / safe
    out = np.where(span > 0, out, 0.0)
    return np.clip(out, 0.0, 1.0)


def windowize(values: np.ndarray, lookback: int = 1) -> np.ndarray:
    """Sliding sequences of length lookback: (n,d) -> (n - lookback + 1, lookback, d).

    Sequence i carries rows i..i+lookback-1; callers align labels with the
    final row of each sequence. Returns an empty array when the matrix is
    shorter than the lookback.
    """
    if lookback < 1:
        raise FeatureError("lookback must be >= 1")
    n, d = values.shape
    if n < lookback:
        return np.zeros((0, lookback, d))
    if lookback == 1:
        return values[:, None, :].copy()
    return np.stack([values[i : i + lookback] for i in range(n - lookback + 1)])


def write_feature_csv(matrix: FeatureMatrix, path: str | Path) -> str:
    """Write window_start, the 17 features and the label; returns the digest."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("window_start", *FEATURE_NAMES, "label"))
        for i in range(len(matrix)):
            row = [repr(float(matrix.window_starts[i]))]
            row.extend(repr(float(v)) for v in matrix.values[i])
            row.append(matrix.labels[i])
            writer.writerow(row)
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_feature_csv(path: str | Path, window: float = 1.0, source_digest: str = "") -> FeatureMatrix:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ("window_start", *FEATURE_NAMES, "label")
        if tuple(header) != expected:
            raise FeatureError(f"unexpected feature CSV header in {path}")
        starts, rows, labels = [], [], []
        for rec in reader:
            starts.append(float(rec[0]))
            rows.append([float(v) for v in rec[1 : 1 + NUM_FEATURES]])
            labels.append(rec[-1])
    return FeatureMatrix(
        window_starts=np.asarray(starts, dtype=float),
        values=np.asarray(rows, dtype=float).reshape(len(rows), NUM_FEATURES),
        labels=labels,
        window=window,
        source_digest=source_digest,
    )
