"""TDMA radio network: slot schedules, bit-error injection, receive policy,
external radio, and SNTP clock synchronization.

Times are microseconds on the global (true) simulation timeline.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import InfeasibleError, SyncFailure
from .packet import BROADCAST, OVERHEAD_BITS, PacketType, ParseResult, flip_bits, frame_bits, parse_frame


@dataclass(frozen=True)
class RadioSpec:
    rate_bps: float
    active_mw: float
    guard_us: float = 10.0

    def airtime_us(self, bits: float) -> float:
        return bits / self.rate_bps * 1e6

    def bits_in(self, us: float) -> float:
        return us * 1e-6 * self.rate_bps


INTRA = RadioSpec(7e6, 1.721)
EXTERNAL = RadioSpec(46e6, 9.2)


def frame_airtime_us(payload_len: int, radio: RadioSpec = INTRA) -> float:
    return radio.airtime_us(frame_bits(payload_len))


# --------------------------------------------------------------------------
# TDMA

class Slot(NamedTuple):
    node_id: int
    flow_id: int
    start_us: float
    duration_us: float

    @property
    def end_us(self) -> float:
        return self.start_us + self.duration_us


@dataclass
class TdmaSchedule:
    epoch_us: float
    slots: list[Slot] = field(default_factory=list)
    guard_us: float = 10.0

    def used_us(self) -> float:
        return sum(s.duration_us for s in self.slots) + self.guard_us * len(self.slots)

    def validate(self) -> None:
        order = sorted(self.slots, key=lambda s: s.start_us)
        for a, b in zip(order, order[1:]):
            if b.start_us < a.end_us + self.guard_us - 1e-9:
                raise InfeasibleError(f"TDMA slots overlap: {a} / {b}", row="tdma")
        if order and order[-1].end_us + self.guard_us > self.epoch_us + 1e-6:
            over = order[-1].end_us + self.guard_us - self.epoch_us
            raise InfeasibleError(f"last TDMA slot ends {over:.1f} us past the {self.epoch_us:.1f} us epoch",
                                  row="tdma", violation=over)
        if self.used_us() > self.epoch_us + 1e-6:
            raise InfeasibleError(f"TDMA slots need {self.used_us():.1f} us of a {self.epoch_us:.1f} us epoch",
                                  row="tdma", violation=self.used_us() - self.epoch_us)

    def slot_for(self, node_id: int, flow_id: int | None = None) -> Slot:
        for s in self.slots:
            if s.node_id == node_id and (flow_id is None or s.flow_id == flow_id):
                return s
        raise KeyError((node_id, flow_id))

    def to_dict(self) -> dict:
        return {"epoch_us": self.epoch_us, "guard_us": self.guard_us,
                "slots": [s._asdict() for s in self.slots]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TdmaSchedule":
        return cls(d["epoch_us"], [Slot(**s) for s in d["slots"]], d.get("guard_us", 10.0))


def build_tdma(n_nodes: int, demands: Mapping[tuple[int, int], float] | None = None, epoch_us: float = 10_000.0,
               guard_us: float = 10.0, stretch: bool = True) -> TdmaSchedule:
    """Round-robin slots by node id (then flow id).

    ``demands`` maps ``(node_id, flow_id)`` to required airtime in µs
    (default: one equal-demand slot per node). With ``stretch`` the spare
    time is shared out in proportion to demand so the epoch is filled.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    if demands is None:
        demands = {(n, 0): 1.0 for n in range(n_nodes)}
    items = sorted((k, float(v)) for k, v in demands.items() if v > 0)
    if not items:
        return TdmaSchedule(epoch_us, [], guard_us)
    need = sum(v for _, v in items) + guard_us * len(items)
    if need > epoch_us + 1e-6:
        raise InfeasibleError(f"airtime demand {need:.1f} us exceeds the {epoch_us:.1f} us epoch",
                              row="tdma", violation=need - epoch_us)
    avail = epoch_us - guard_us * len(items)
    total = sum(v for _, v in items)
    scale = avail / total if stretch else 1.0
    slots, t = [], 0.0
    for (node, flow), v in items:
        d = v * scale
        slots.append(Slot(node, flow, t, d))
        t += d + guard_us
    return TdmaSchedule(epoch_us, slots, guard_us)


# --------------------------------------------------------------------------
# channel errors and receive policy

@dataclass
class BerModel:
    ber: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.ber < 1:
            raise ValueError("ber must lie in [0, 1)")
        self.rng = np.random.default_rng([self.seed, 0xBE7])

    def flips(self, n_bits: int) -> np.ndarray:
        """Positions hit by independent per-bit errors (binomial count, uniform positions)."""
        if self.ber == 0:
            return np.zeros(0, dtype=np.int64)
        k = int(self.rng.binomial(n_bits, self.ber))
        if k == 0:
            return np.zeros(0, dtype=np.int64)
        return np.sort(self.rng.choice(n_bits, size=k, replace=False))

    def corrupt(self, frame: bytes, n_bits: int | None = None) -> tuple[bytes, int]:
        n = 8 * len(frame) if n_bits is None else n_bits
        pos = self.flips(n)
        return (flip_bits(frame, pos.tolist()) if pos.size else frame), int(pos.size)


def expected_frame_error(ber: float, bits: int) -> float:
    return 1.0 - (1.0 - ber) ** bits


class Verdict(str, Enum):
    ACCEPT = "accept"
    DROP = "drop"
    DEGRADED = "pass-through-degraded"


def receive_policy(result: ParseResult) -> Verdict:
    """Hash, control, query and sync frames must be intact; a signal frame
    with a good header but damaged payload is still delivered, flagged."""
    if not result.header_ok:
        return Verdict.DROP
    if result.payload_ok:
        return Verdict.ACCEPT
    if result.ptype == PacketType.SIGNAL:
        return Verdict.DEGRADED
    return Verdict.DROP


# --------------------------------------------------------------------------
# network simulation

class Delivery(NamedTuple):
    t_us: float
    src: int
    dst: int
    frame: bytes
    error_bits: int
    verdict: Verdict
    packet: object


class Network:
    """Shared intra-cluster medium. Every transmission is checked against
    all earlier ones so that no two ever overlap in time."""

    def __init__(self, node_ids: Sequence[int], radio: RadioSpec = INTRA, ber: BerModel | None = None):
        self.node_ids = list(node_ids)
        self.radio = radio
        self.ber = ber or BerModel(0.0)
        self.trace: list[dict] = []
        self._busy: list[tuple[float, float, int]] = []
        self.energy_uj: dict[int, float] = {n: 0.0 for n in self.node_ids}
        self.unavailable: list[tuple[float, float]] = []
        self.counters = {"sent": 0, "accepted": 0, "dropped": 0, "degraded": 0}

    def _claim(self, start: float, end: float, node: int) -> None:
        for a, b, who in self._busy:
            if start < b - 1e-9 and a < end - 1e-9:
                raise AssertionError(f"radio overlap: node {node} [{start:.3f},{end:.3f}) vs node {who} [{a:.3f},{b:.3f})")
        self._busy.append((start, end, node))

    def is_available(self, t: float) -> bool:
        return not any(a <= t < b for a, b in self.unavailable)

    def transmit(self, slot: Slot, frames: Iterable[bytes], dst: int = BROADCAST, offset_us: float = 0.0,
                 payload_lens: Sequence[int] | None = None) -> list[Delivery]:
        """Send frames back to back inside ``slot``; returns one delivery per receiver per frame."""
        frames = list(frames)
        t = slot.start_us + offset_us
        out = []
        for i, frame in enumerate(frames):
            L = payload_lens[i] if payload_lens is not None else None
            bits = frame_bits(L) if L is not None else _frame_bits_of(frame)
            air = self.radio.airtime_us(bits)
            if t + air > slot.end_us + 1e-6:
                raise AssertionError(f"slot overflow: node {slot.node_id} needs {t + air - slot.start_us:.2f} us "
                                     f"of a {slot.duration_us:.2f} us slot")
            if not self.is_available(t):
                raise AssertionError("transmission attempted while the network is reserved")
            self._claim(t, t + air, slot.node_id)
            receivers = [n for n in self.node_ids if n != slot.node_id] if dst == BROADCAST else [dst]
            self.energy_uj[slot.node_id] += self.radio.active_mw * air * 1e-3
            self.counters["sent"] += 1
            for r in receivers:
                self.energy_uj[r] = self.energy_uj.get(r, 0.0) + self.radio.active_mw * air * 1e-3
                got, nerr = self.ber.corrupt(frame, bits)
                res = parse_frame(got)
                verdict = receive_policy(res)
                self.counters[{"accept": "accepted", "drop": "dropped",
                               "pass-through-degraded": "degraded"}[verdict.value]] += 1
                out.append(Delivery(t + air, slot.node_id, r, got, nerr, verdict, res.packet))
                self.trace.append({"t_us": round(t, 3), "slot_node": slot.node_id, "flow": slot.flow_id,
                                   "dst": r, "airtime_us": round(air, 3), "error_bits": nerr,
                                   "ptype": res.ptype, "outcome": verdict.value})
            t += air
        return out

    def reserve(self, start: float, end: float, reason: str) -> None:
        self.unavailable.append((start, end))
        self.trace.append({"t_us": start, "event": "network_unavailable", "until_us": end, "reason": reason})

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _frame_bits_of(frame: bytes) -> int:
    # frames are padded to whole bytes; recover the true bit count from the byte length
    return frame_bits((8 * len(frame) - OVERHEAD_BITS) // 8)


# --------------------------------------------------------------------------
# clock synchronization

@dataclass
class ClockState:
    offset_us: float
    drift: float = 0.0
    last_sync_us: float | None = None
    rounds: int = 0
    converged: bool = True


def sntp_offset(t0: float, t1: float, t2: float, t3: float) -> float:
    """Clock offset estimate of the server relative to the client."""
    return ((t1 - t0) + (t2 - t3)) / 2.0


def sntp_sync(offsets: Mapping[int, float], server: int = 0, now_us: float = 0.0, precision_us: float = 2.0,
              max_rounds: int = 4, link_delay_us: float = 40.0, jitter_us: float = 0.5, tick_us: float = 1.0,
              seed: int = 0, network: Network | None = None, log: list | None = None) -> dict[int, ClockState]:
    """Iterative SNTP against one server node.

    ``offsets`` are each node's clock error (local minus true time). Each
    round a client timestamps a request (t0), the server stamps receipt and
    reply (t1, t2), the client stamps the reply (t3); the client then adds
    the estimated offset to its clock, and stops once a correction was
    already within ``precision_us``. Timestamps are quantized to
    ``tick_us``; each direction adds its own uniform jitter to the shared
    link delay, so the residual error after a round is at most the jitter
    plus one tick. The network is reserved for the whole window.
    """
    rng = np.random.default_rng([seed, 0x5A7C])
    state = {n: ClockState(float(o)) for n, o in offsets.items()}
    server_off = state[server].offset_us
    t = now_us
    q = (lambda x: np.round(x / tick_us) * tick_us) if tick_us > 0 else (lambda x: x)
    for n in sorted(state):
        if n == server:
            continue
        st = state[n]
        st.converged = False
        for r in range(max_rounds):
            d_up, d_down = link_delay_us + rng.uniform(-jitter_us, jitter_us, size=2)
            T0 = t
            t0 = q(T0 + st.offset_us)
            t1 = q(T0 + d_up + server_off)
            t2 = q(T0 + d_up + 5.0 + server_off)
            t3 = q(T0 + d_up + d_down + 5.0 + st.offset_us)
            theta = sntp_offset(t0, t1, t2, t3)
            t += d_up + d_down + 5.0 + 10.0
            st.rounds = r + 1
            st.offset_us += theta
            if abs(theta) <= precision_us:
                st.converged = True
                break
        else:
            st.converged = abs(st.offset_us - server_off) <= precision_us
        st.last_sync_us = t
        if not st.converged and log is not None:
            log.append({"event": "sync_failure", "node": n, "residual_us": st.offset_us - server_off})
    if network is not None:
        network.reserve(now_us, t, "sntp")
    if log is not None:
        log.append({"event": "network_unavailable", "start_us": now_us, "end_us": t, "reason": "sntp"})
    return state


def sntp_sync_strict(offsets: Mapping[int, float], **kw) -> dict[int, ClockState]:
    st = sntp_sync(offsets, **kw)
    bad = [n for n, s in st.items() if not s.converged]
    if bad:
        raise SyncFailure(f"clock sync did not converge for nodes {bad}")
    return st
