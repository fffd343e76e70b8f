"""Signaling events and event traces produced by the control-plane emulator.

A trace is serialized as JSON lines: one header line carrying the run
configuration, seed and attack metadata, followed by one event per line in
timestamp order. Serialization is canonical (sorted keys, compact separators)
so that identical runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

SUCCESS = "Success"
FAILURE = "Failure"

NF_AMF = "AMF"
NF_SMF = "SMF"
NF_NSSF = "NSSF"

TRACE_FORMAT = "slicewarden-trace/1"


class ProcedureKind(str, Enum):
    """5G procedure kinds seen on the control plane.

    The first six are UE-triggerable top-level procedures; the last four are
    sub-procedures emitted while a Registration or ISS chain runs.
    """

    REGISTRATION = "Registration"
    ISS = "ISS"
    UPLINK = "Uplink"
    DOWNLINK = "Downlink"
    UE_RELEASE_PDU_SESSION = "UeReleasePduSession"
    GNB_RELEASE_PDU_SESSION = "GnbReleasePduSession"
    DEREGISTRATION = "Deregistration"
    NS_SELECTION = "NsSelection"
    PDU_SESSION_ESTABLISHMENT = "PduSessionEstablishment"
    PDU_SESSION_RELEASE = "PduSessionRelease"


TOP_LEVEL_KINDS = (
    ProcedureKind.REGISTRATION,
    ProcedureKind.ISS,
    ProcedureKind.UPLINK,
    ProcedureKind.DOWNLINK,
    ProcedureKind.UE_RELEASE_PDU_SESSION,
    ProcedureKind.GNB_RELEASE_PDU_SESSION,
)

SUB_PROCEDURE_KINDS = (
    ProcedureKind.DEREGISTRATION,
    ProcedureKind.NS_SELECTION,
    ProcedureKind.PDU_SESSION_ESTABLISHMENT,
    ProcedureKind.PDU_SESSION_RELEASE,
)


@dataclass(frozen=True)
class SignalingEvent:
    """One timestamped procedure occurrence on the control plane.

    latency_ms is nonzero only for successful PDU session establishments.
    """

    timestamp: float
    ue_id: int
    kind: ProcedureKind
    slice_id: int
    outcome: str
    latency_ms: float = 0.0
    nfs: tuple[str, ...] = ()

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    def to_json_obj(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "ue_id": self.ue_id,
            "kind": self.kind.value,
            "slice": self.slice_id,
            "outcome": self.outcome,
            "latency_ms": self.latency_ms,
            "nfs": sorted(self.nfs),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SignalingEvent":
        return cls(
            timestamp=float(obj["timestamp"]),
            ue_id=int(obj["ue_id"]),
            kind=ProcedureKind(obj["kind"]),
            slice_id=int(obj["slice"]),
            outcome=str(obj["outcome"]),
            latency_ms=float(obj["latency_ms"]),
            nfs=tuple(obj["nfs"]),
        )


@dataclass
class EventTrace:
    """An ordered signaling trace plus the run metadata that produced it.

    config and attack are plain-dict snapshots (kept JSON-native so the header
    round-trips exactly). attack_window is (start, end) in seconds, or None
    for benign runs.
    """

    config: dict
    seed: int
    scenario: str
    events: list[SignalingEvent] = field(default_factory=list)
    attack: Optional[dict] = None
    attack_window: Optional[tuple[float, float]] = None

    @property
    def duration(self) -> float:
        return float(self.config["emulation_duration"])

    def header_obj(self) -> dict:
        return {
            "format": TRACE_FORMAT,
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "attack": self.attack,
            "attack_window": list(self.attack_window) if self.attack_window else None,
        }


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def trace_to_bytes(trace: EventTrace) -> bytes:
    lines = [_dumps(trace.header_obj())]
    lines.extend(_dumps(ev.to_json_obj()) for ev in trace.events)
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_trace(trace: EventTrace, path: str | Path) -> str:
    """Write the trace as JSONL and return its sha256 digest."""
    data = trace_to_bytes(trace)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_trace(path: str | Path) -> EventTrace:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != TRACE_FORMAT:
            raise ValueError(f"not a {TRACE_FORMAT} file: {path}")
        events = [SignalingEvent.from_json_obj(json.loads(line)) for line in fh if line.strip()]
    window = header.get("attack_window")
    return EventTrace(
        config=header["config"],
        seed=int(header["seed"]),
        scenario=str(header["scenario"]),
        events=events,
        attack=header.get("attack"),
        attack_window=tuple(window) if window else None,
    )


def trace_digest(trace: EventTrace) -> str:
    """Digest of the canonical serialization; equals the written file's digest."""
    return hashlib.sha256(trace_to_bytes(trace)).hexdigest()
