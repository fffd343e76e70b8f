"""Deterministic discrete-event emulation of UEs on a sliced 5G control plane.

Each UE walks the procedure dependency graph (a successful procedure gates
which procedure may follow), emitting signaling events against shared network
functions. RSA/TSA attack plans overlay periodic ISS bursts from a botnet of
compromised UEs on top of the benign traffic.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, asdict, field
from enum import Enum
from typing import Optional

from .events import (
    FAILURE,
    NF_AMF,
    NF_NSSF,
    NF_SMF,
    SUCCESS,
    EventTrace,
    ProcedureKind,
    SignalingEvent,
)

PK = ProcedureKind

# Successful completion of the row key enables exactly these follow-ups.
SUBSEQUENT_PROCEDURES: dict[ProcedureKind, tuple[ProcedureKind, ...]] = {
    PK.ISS: (PK.ISS, PK.UPLINK, PK.DOWNLINK, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION),
    PK.REGISTRATION: (PK.ISS, PK.UPLINK, PK.DOWNLINK, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION),
    PK.UPLINK: (PK.ISS, PK.DOWNLINK, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION),
    PK.DOWNLINK: (PK.ISS, PK.UPLINK, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION),
    PK.UE_RELEASE_PDU_SESSION: (PK.ISS, PK.DOWNLINK, PK.UPLINK, PK.GNB_RELEASE_PDU_SESSION),
    PK.GNB_RELEASE_PDU_SESSION: (PK.ISS, PK.UPLINK, PK.DOWNLINK),
}

# Spacing between sub-events of one procedure chain, seconds.
CHAIN_STEP_S = 0.005
# Delay between the targeted burst leg and its switchback leg, seconds.
SWITCHBACK_DELAY_S = 0.1
# Window width used for per-NF load accounting, seconds.
LOAD_WINDOW_S = 1.0
# Initial registrations are spread uniformly over this many leading seconds.
INITIAL_ATTACH_SPREAD_S = 60.0


class ConfigError(ValueError):
    """A configuration value violates its documented invariant."""


class AttackVariant(str, Enum):
    RSA = "rsa"
    TSA = "tsa"


@dataclass(frozen=True)
class NetworkConfig:
    """Emulation parameters; defaults mirror the reference scenario."""

    num_slices: int = 4
    num_ues: int = 92
    num_compromised: int = 28
    emulation_duration: float = 7200.0
    attack_start: float = 3600.0
    amf_capacity: int = 35  # admission requests per load window
    smf_capacity: int = 10  # per slice
    nssf_capacity: int = 8
    base_failure_prob: float = 0.02
    latency_base_ms: float = 20.0
    latency_per_request_ms: float = 2.0
    peak_procedure_rate: float = 0.05  # top-level procedures per UE-second at peak
    compromised_benign_traffic: bool = True

    def validate(self) -> None:
        if self.num_slices < 1:
            raise ConfigError("num_slices must be >= 1")
        if self.num_ues < 1:
            raise ConfigError("num_ues must be >= 1")
        if not 0 <= self.num_compromised <= self.num_ues:
            raise ConfigError("num_compromised must be in [0, num_ues]")
        if not 0 < self.attack_start < self.emulation_duration:
            raise ConfigError("attack_start must lie inside (0, emulation_duration)")
        if min(self.amf_capacity, self.smf_capacity, self.nssf_capacity) <= 0:
            raise ConfigError("per-NF capacities must be positive")
        if not 0 <= self.base_failure_prob < 1:
            raise ConfigError("base_failure_prob must be in [0, 1)")
        if self.peak_procedure_rate <= 0:
            raise ConfigError("peak_procedure_rate must be positive")

    def procedure_rate(self, now: float) -> float:
        """Per-UE top-level rate: linear ramp 0.5x -> 1x at attack_start, then flat."""
        ramp = 0.5 + 0.5 * min(now / self.attack_start, 1.0)
        return self.peak_procedure_rate * ramp


@dataclass(frozen=True)
class AttackPlan:
    """Orchestration of one RSA or TSA campaign."""

    variant: AttackVariant
    compromised_ue_ids: tuple[int, ...]
    start: float
    burst_interval: float = 5.0
    switchback_prob: float = 0.5
    target_slice: Optional[int] = None  # TSA only

    def validate(self, config: NetworkConfig) -> None:
        if self.variant is AttackVariant.TSA:
            if self.target_slice is None or not 0 <= self.target_slice < config.num_slices:
                raise ConfigError("TSA plan needs a target_slice inside the slice range")
        elif self.target_slice is not None:
            raise ConfigError("RSA plan must not carry a target_slice")
        if self.start < config.attack_start:
            raise ConfigError("attack cannot start before config.attack_start")
        if self.burst_interval <= 0:
            raise ConfigError("burst_interval must be positive")
        if not 0 <= self.switchback_prob <= 1:
            raise ConfigError("switchback_prob must be in [0, 1]")
        if any(not 0 <= u < config.num_ues for u in self.compromised_ue_ids):
            raise ConfigError("compromised UE id outside the UE range")

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["variant"] = self.variant.value
        obj["compromised_ue_ids"] = sorted(self.compromised_ue_ids)
        return obj


@dataclass
class UeState:
    """Mutable per-UE registration and session state."""

    ue_id: int
    is_compromised: bool = False
    registered: bool = False
    current_slice: Optional[int] = None
    active_pdu_sessions: dict[int, int] = field(default_factory=dict)
    last_procedure: Optional[ProcedureKind] = None

    def session_count(self, slice_id: Optional[int] = None) -> int:
        if slice_id is None:
            slice_id = self.current_slice
        if slice_id is None:
            return 0
        return self.active_pdu_sessions.get(slice_id, 0)

    def has_session(self) -> bool:
        return self.session_count() > 0


def plan_attack(
    variant: AttackVariant | str,
    config: NetworkConfig,
    rng: random.Random,
    burst_interval: float = 5.0,
    switchback_prob: float = 0.5,
) -> AttackPlan:
    """Pick the botnet, the start time and (for TSA) the target slice."""
    config.validate()
    variant = AttackVariant(variant)
    if config.num_compromised > config.num_ues:
        raise ConfigError("num_compromised exceeds num_ues")
    compromised = tuple(sorted(rng.sample(range(config.num_ues), config.num_compromised)))
    target = rng.randrange(config.num_slices) if variant is AttackVariant.TSA else None
    plan = AttackPlan(
        variant=variant,
        compromised_ue_ids=compromised,
        start=config.attack_start,
        burst_interval=burst_interval,
        switchback_prob=switchback_prob,
        target_slice=target,
    )
    plan.validate(config)
    return plan


class LoadTracker:
    """Per-NF request counts in tumbling load windows.

    Tolerates the small timestamp skew introduced by chain serialization by
    keeping counts per window index instead of a single running window.
    """

    def __init__(self) -> None:
        self._windows: dict[int, dict[tuple, int]] = {}
        self._max_window = -1

    def register(self, nf_key: tuple, now: float) -> int:
        """Count one request against nf_key; returns the load including it."""
        w = int(now // LOAD_WINDOW_S)
        if w > self._max_window:
            self._max_window = w
            stale = [k for k in self._windows if k < w - 5]
            for k in stale:
                del self._windows[k]
        counts = self._windows.setdefault(w, {})
        counts[nf_key] = counts.get(nf_key, 0) + 1
        return counts[nf_key]


# NFs touched by each event kind; the first entry is the admission gate.
_EVENT_NFS: dict[ProcedureKind, tuple[str, ...]] = {
    PK.REGISTRATION: (NF_AMF,),
    PK.DEREGISTRATION: (NF_AMF,),
    PK.NS_SELECTION: (NF_NSSF, NF_AMF),
    PK.PDU_SESSION_ESTABLISHMENT: (NF_SMF, NF_AMF),
    PK.PDU_SESSION_RELEASE: (NF_SMF, NF_AMF),
    PK.UPLINK: (NF_AMF,),
    PK.DOWNLINK: (NF_AMF,),
    PK.UE_RELEASE_PDU_SESSION: (NF_AMF, NF_SMF),
    PK.GNB_RELEASE_PDU_SESSION: (NF_AMF, NF_SMF),
}

# Teardown signaling is not admission-controlled and never fails.
_ALWAYS_SUCCEED = {
    PK.DEREGISTRATION,
    PK.PDU_SESSION_RELEASE,
    PK.UE_RELEASE_PDU_SESSION,
    PK.GNB_RELEASE_PDU_SESSION,
}


class _SimContext:
    """Shared mutable machinery for one emulation run."""

    def __init__(self, config: NetworkConfig, rng: random.Random) -> None:
        self.config = config
        self.rng = rng
        self.tracker = LoadTracker()
        self.events: list[tuple[float, int, SignalingEvent]] = []
        self._seq = 0

    def _nf_capacity(self, nf: str) -> int:
        if nf == NF_AMF:
            return self.config.amf_capacity
        if nf == NF_NSSF:
            return self.config.nssf_capacity
        return self.config.smf_capacity

    def emit(self, now: float, ue_id: int, kind: ProcedureKind, slice_id: int) -> bool:
        """Emit one event, drawing its outcome from the load-dependent model."""
        nfs = _EVENT_NFS[kind]
        gate_nf = nfs[0]
        gate_load = 0
        for nf in nfs:
            key = (nf, slice_id) if nf == NF_SMF else (nf,)
            load = self.tracker.register(key, now)
            if nf == gate_nf:
                gate_load = load

        if kind in _ALWAYS_SUCCEED:
            success = True
        else:
            capacity = self._nf_capacity(gate_nf)
            overload = max(0.0, gate_load / capacity - 1.0)
            p_fail = min(0.95, self.config.base_failure_prob + 0.5 * overload)
            success = self.rng.random() >= p_fail

        latency = 0.0
        if kind is PK.PDU_SESSION_ESTABLISHMENT and success:
            base = self.config.latency_base_ms + self.config.latency_per_request_ms * gate_load
            latency = base * (0.9 + 0.2 * self.rng.random())

        event = SignalingEvent(
            timestamp=now,
            ue_id=ue_id,
            kind=kind,
            slice_id=slice_id,
            outcome=SUCCESS if success else FAILURE,
            latency_ms=latency,
            nfs=nfs,
        )
        self.events.append((now, self._seq, event))
        self._seq += 1
        return success


def _registration_chain(state: UeState, start: float, slice_id: int, ctx: _SimContext) -> float:
    """NS selection, registration, PDU establishment; commits on the reg step."""
    t = start
    if ctx.emit(t, state.ue_id, PK.NS_SELECTION, slice_id):
        t += CHAIN_STEP_S
        if ctx.emit(t, state.ue_id, PK.REGISTRATION, slice_id):
            state.registered = True
            state.current_slice = slice_id
            t += CHAIN_STEP_S
            if ctx.emit(t, state.ue_id, PK.PDU_SESSION_ESTABLISHMENT, slice_id):
                state.active_pdu_sessions[slice_id] = state.session_count(slice_id) + 1
    state.last_procedure = PK.REGISTRATION
    return t


def _iss_chain(state: UeState, start: float, dest_slice: int, ctx: _SimContext) -> float:
    """Release, deregister, select, register, establish toward dest_slice.

    A failed admission step aborts the chain; the UE then stays attached to
    its previous slice, but an already-released session stays released.
    """
    t = start
    old_slice = state.current_slice
    if state.has_session():
        ctx.emit(t, state.ue_id, PK.PDU_SESSION_RELEASE, old_slice)
        state.active_pdu_sessions[old_slice] -= 1
        t += CHAIN_STEP_S
    ctx.emit(t, state.ue_id, PK.DEREGISTRATION, old_slice)
    t += CHAIN_STEP_S
    if ctx.emit(t, state.ue_id, PK.NS_SELECTION, dest_slice):
        t += CHAIN_STEP_S
        if ctx.emit(t, state.ue_id, PK.REGISTRATION, dest_slice):
            state.current_slice = dest_slice
            t += CHAIN_STEP_S
            if ctx.emit(t, state.ue_id, PK.PDU_SESSION_ESTABLISHMENT, dest_slice):
                state.active_pdu_sessions[dest_slice] = state.session_count(dest_slice) + 1
    state.last_procedure = PK.ISS
    return t


def _eligible_procedures(state: UeState, config: NetworkConfig) -> list[ProcedureKind]:
    row = SUBSEQUENT_PROCEDURES[state.last_procedure]
    needs_session = {PK.UPLINK, PK.DOWNLINK, PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION}
    eligible = []
    for kind in row:
        if kind in needs_session and not state.has_session():
            continue
        if kind is PK.ISS and config.num_slices < 2:
            continue
        eligible.append(kind)
    return eligible


def step_ue(
    state: UeState,
    now: float,
    rng: random.Random,
    config: NetworkConfig,
    ctx: Optional[_SimContext] = None,
) -> list[SignalingEvent]:
    """Run one benign top-level procedure for a UE; returns the emitted events.

    An unregistered UE (or one whose dependency row offers nothing feasible)
    falls back to Registration.
    """
    own_ctx = ctx is None
    if own_ctx:
        ctx = _SimContext(config, rng)
    mark = len(ctx.events)
    _step_ue_into(state, now, ctx)
    return [ev for _, _, ev in ctx.events[mark:]]


def _step_ue_into(state: UeState, now: float, ctx: _SimContext) -> float:
    config, rng = ctx.config, ctx.rng
    if not state.registered or state.last_procedure is None:
        return _registration_chain(state, now, rng.randrange(config.num_slices), ctx)
    eligible = _eligible_procedures(state, config)
    if not eligible:
        return _registration_chain(state, now, rng.randrange(config.num_slices), ctx)
    kind = rng.choice(eligible)
    if kind is PK.ISS:
        dest = rng.choice([s for s in range(config.num_slices) if s != state.current_slice])
        return _iss_chain(state, now, dest, ctx)
    # Single-event procedures.
    ok = ctx.emit(now, state.ue_id, kind, state.current_slice)
    if ok and kind in (PK.UE_RELEASE_PDU_SESSION, PK.GNB_RELEASE_PDU_SESSION):
        state.active_pdu_sessions[state.current_slice] -= 1
    state.last_procedure = kind
    return now


def _attack_burst(state: UeState, start: float, plan: AttackPlan, ctx: _SimContext) -> float:
    """One burst for one compromised UE: targeted ISS leg plus optional switchback."""
    config, rng = ctx.config, ctx.rng
    if not state.registered:
        return _registration_chain(state, start, rng.randrange(config.num_slices), ctx)
    if plan.variant is AttackVariant.TSA:
        dest = plan.target_slice
    else:
        dest = rng.choice([s for s in range(config.num_slices) if s != state.current_slice])
    t = _iss_chain(state, start, dest, ctx)
    if rng.random() < plan.switchback_prob:
        others = [s for s in range(config.num_slices) if s != state.current_slice]
        if others:
            t = _iss_chain(state, t + SWITCHBACK_DELAY_S, rng.choice(others), ctx)
    return t


_BENIGN = 0
_ATTACK = 1


def run_emulation(
    config: NetworkConfig,
    plan: Optional[AttackPlan] = None,
    seed: int = 0,
) -> EventTrace:
    """Run one emulation; deterministic for a given (config, plan, seed).

    A plan with no compromised UEs is treated as no plan at all, so the trace
    is byte-identical to the benign run under the same seed.
    """
    config.validate()
    if plan is not None:
        plan.validate(config)
        if not plan.compromised_ue_ids:
            plan = None

    rng = random.Random(seed)
    ctx = _SimContext(config, rng)
    compromised = set(plan.compromised_ue_ids) if plan else set()
    ues = [UeState(ue_id=i, is_compromised=i in compromised) for i in range(config.num_ues)]
    busy_until = [0.0] * config.num_ues

    heap: list[tuple[float, int, int, int]] = []  # (time, seq, action, ue_id)
    seq = 0
    for ue in ues:
        t0 = rng.uniform(0.0, min(INITIAL_ATTACH_SPREAD_S, config.emulation_duration))
        heapq.heappush(heap, (t0, seq, _BENIGN, ue.ue_id))
        seq += 1
    if plan:
        # Each compromised UE fires every burst_interval at its own phase, so
        # the flood is sustained rather than clumped into one second; the
        # per-burst sub-second jitter keeps timestamps unique.
        for uid in plan.compromised_ue_ids:
            phase = rng.random() * plan.burst_interval
            t_burst = plan.start + phase
            while t_burst < config.emulation_duration:
                jitter = rng.random() * min(1.0, plan.burst_interval)
                heapq.heappush(heap, (t_burst + jitter, seq, _ATTACK, uid))
                seq += 1
                t_burst += plan.burst_interval

    while heap:
        sched_t, _, action, uid = heapq.heappop(heap)
        if sched_t >= config.emulation_duration:
            continue
        state = ues[uid]
        start = max(sched_t, busy_until[uid])
        if action == _BENIGN:
            if (
                plan
                and state.is_compromised
                and not config.compromised_benign_traffic
                and sched_t >= plan.start
            ):
                continue
            end = _step_ue_into(state, start, ctx)
            busy_until[uid] = end + CHAIN_STEP_S
            next_t = end + rng.expovariate(config.procedure_rate(start))
            if next_t < config.emulation_duration:
                heapq.heappush(heap, (next_t, seq, _BENIGN, uid))
                seq += 1
        else:
            end = _attack_burst(state, start, plan, ctx)
            busy_until[uid] = end + CHAIN_STEP_S

    ordered = [ev for _, _, ev in sorted(ctx.events, key=lambda item: (item[0], item[1]))]
    return EventTrace(
        config=asdict(config),
        seed=seed,
        scenario=plan.variant.value if plan else "benign",
        events=ordered,
        attack=plan.to_json_obj() if plan else None,
        attack_window=(plan.start, config.emulation_duration) if plan else None,
    )


def simulate_scenario(
    scenario: str,
    config: NetworkConfig,
    seed: int,
    burst_interval: float = 5.0,
    switchback_prob: float = 0.5,
) -> EventTrace:
    """Convenience wrapper: benign run, or plan+run for 'rsa'/'tsa'.

    The plan is drawn from a dedicated RNG stream (seed offset) so the
    emulation RNG consumes the same sequence as a benign run until the
    attack starts.
    """
    config.validate()
    if scenario == "benign":
        return run_emulation(config, None, seed)
    plan_rng = random.Random((seed + 1) * 7919)
    plan = plan_attack(scenario, config, plan_rng, burst_interval, switchback_prob)
    return run_emulation(config, plan, seed)
