"""Planning and simulated execution of queries over the data stored on a cluster.

Execution model. Every node reads the stored samples a query needs, runs
the predicate pipeline over them, and ships matching records to the base
station over the shared external radio. Predicate PEs process stored data
at the rate the scheduler grants them: a pass over ``D`` ms of samples on
``Z`` channels takes ``D`` ms, so ``E`` electrodes take ``D * E / Z``. The
query's latency adds the stages up; the sustainable query rate is set by
the slowest stage, because consecutive queries overlap (one node computes
the next query while the radio drains the previous one).
"""
from __future__ import annotations

import json
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..apps import FeatureLayout, SvmModel, TemplateBank, neo, seizure_features, spike_sort
from ..errors import DataExpiredError, PlanningError, QuerySyntaxError
from ..network import EXTERNAL, INTRA, Network, RadioSpec
from ..node import Fragment, Node
from ..packet import BROADCAST, MAX_PAYLOAD, PacketType, frame_bits, npack, unpack
from ..scheduler import Cluster, Edge, Stage, Task, TaskGraph, solve
from ..similarity import BandParam, dtw_banded
from ..storage import Role
from .language import (And, BoolLit, Call, Compare, ElectrodeRange, Name, Not, Or, QueryAst, TimeExpr, parse,
                       to_text, walk)

BASE_STATION = 254


# --------------------------------------------------------------------------
# predicates


@dataclass(frozen=True)
class Predicate:
    """A named condition with the PE chain that evaluates it.

    ``test(cluster, node, window, args)`` gets one electrode's samples.
    ``edges`` wire the PEs; by default they form a chain in listed order.
    """
    name: str
    pes: tuple[str, ...]
    test: Callable
    edges: tuple[tuple[str, str], ...] | None = None

    def wiring(self) -> list[tuple[str, str]]:
        return list(self.edges) if self.edges is not None else list(zip(self.pes, self.pes[1:]))


def _seizure_test(cluster: "QueryCluster", node: int, window: np.ndarray, args) -> bool:
    x = seizure_features(window, cluster.feature_layout)
    return cluster.seizure_model.decide(x)


def _bank_of(cluster: "QueryCluster", node: int) -> TemplateBank:
    bank = cluster._banks.get(node)
    if bank is None:
        if cluster.templates is None:
            raise PlanningError("no template bank is loaded", constraint="templates")
        bank = TemplateBank.load(cluster.nodes[node].storage, cluster.templates.sketch)
        cluster._banks[node] = bank
    return bank


def _template_index(args) -> int:
    if not args:
        raise PlanningError("template predicates need a template index", constraint="arguments")
    return int(args[0])


def _hash_test(cluster: "QueryCluster", node: int, window: np.ndarray, args) -> bool:
    bank = _bank_of(cluster, node)
    k = _template_index(args)
    labels = spike_sort(window, bank, cluster.neo_threshold)
    return any(l.label == k for l in labels)


def _dtw_test(cluster: "QueryCluster", node: int, window: np.ndarray, args) -> bool:
    bank = _bank_of(cluster, node)
    k = _template_index(args)
    limit = float(args[1]) if len(args) > 1 else cluster.dtw_threshold
    tpl = bank.templates[k]
    L = tpl.size
    x = np.asarray(window, dtype=np.float64)
    best = math.inf
    for st in range(0, max(1, x.size - L + 1), max(1, L // 4)):
        seg = x[st:st + L]
        if seg.size < L:
            break
        best = min(best, float(dtw_banded(seg, tpl, BandParam(8))) / L)
    return best <= limit


PREDICATES: dict[str, Predicate] = {
    "seizure_detect": Predicate("seizure_detect", ("BBF", "FFT", "XCOR", "SVM"), _seizure_test,
                                (("BBF", "SVM"), ("FFT", "SVM"), ("XCOR", "SVM"))),
    "hash_match": Predicate("hash_match", ("SC", "NEO", "HCONV", "NGRAM", "CCHECK", "CSEL"), _hash_test),
    "dtw_match": Predicate("dtw_match", ("SC", "DTW"), _dtw_test),
}


def default_seizure_model(layout: FeatureLayout = FeatureLayout()) -> SvmModel:
    """Flags windows whose band energy is well above background: weight one on
    every band energy and a bias of -0.2 (features are in units of 1e6)."""
    w = np.zeros(layout.size)
    w[layout.fft_bins:layout.fft_bins + len(layout.bands)] = 1.0
    return SvmModel.from_float(w, -0.2)


# --------------------------------------------------------------------------
# cluster with recorded data


class QueryCluster:
    """Nodes whose storage holds recorded samples, plus the radios a query uses."""

    def __init__(self, n_nodes: int, electrodes: int = 96, sample_rate: float = 30_000.0,
                 budgets_mw: Sequence[float] | None = None, external: RadioSpec = EXTERNAL,
                 seizure_model: SvmModel | None = None, feature_layout: FeatureLayout = FeatureLayout(),
                 templates: TemplateBank | None = None, neo_threshold: float = 2e6, dtw_threshold: float = 400.0,
                 background_mw: Sequence[float] | None = None):
        from ..signal import ArrayConfig
        self.array = ArrayConfig(electrodes=electrodes, sample_rate=sample_rate)
        self.budgets_mw = list(budgets_mw) if budgets_mw is not None else [15.0] * n_nodes
        self.nodes = {n: Node(n, self.array, budget_mw=self.budgets_mw[n]) for n in range(n_nodes)}
        self.external = external
        self.network = Network(list(range(n_nodes)), INTRA)
        self.feature_layout = feature_layout
        self.seizure_model = seizure_model or default_seizure_model(feature_layout)
        self.templates = None
        self.neo_threshold = neo_threshold
        self.dtw_threshold = dtw_threshold
        self.background_mw = list(background_mw) if background_mw is not None else [0.0] * n_nodes
        self.recorded = {n: 0 for n in range(n_nodes)}     # samples stored per node
        self.clock_us = 0.0
        self.paused = False
        self.log: list[dict] = []
        self._banks: dict[int, TemplateBank] = {}
        self._z_cache: dict[tuple, int] = {}
        if templates is not None:
            self.load_templates(templates)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def samples_per_ms(self) -> float:
        return self.array.sample_rate / 1000.0

    def record(self, node: int, samples) -> None:
        """Append ``samples`` (electrodes x time, whole chunks) to the node's raw partition."""
        x = np.asarray(samples)
        if x.ndim != 2 or x.shape[0] != self.array.electrodes:
            raise ValueError(f"expected {self.array.electrodes} electrode rows")
        st = self.nodes[node].storage
        n = st.partitions[Role.RAW].chunk_items
        if x.shape[1] % n:
            raise ValueError(f"recordings must be whole {n}-sample chunks")
        E = x.shape[0]
        period = n / self.array.sample_rate * 1e6
        start = self.recorded[node]
        # chunks reach the controller at their acquisition time, electrode by electrode
        for k in range(x.shape[1] // n):
            c = start // n + k
            for e in range(E):
                st.sc_write(Role.RAW, e, c * n, x[e, k * n:(k + 1) * n], now=(c + 1) * period + e * period / E)
        self.recorded[node] = start + x.shape[1]
        self.clock_us = max(self.clock_us, self.recorded[node] / self.array.sample_rate * 1e6 + period)

    def load_templates(self, bank: TemplateBank) -> None:
        self.templates = bank
        self._banks.clear()
        for node in self.nodes.values():
            bank.store(node.storage)

    def now_sample(self, node: int) -> int:
        return self.recorded[node]

    def oldest_sample(self, node: int) -> int:
        c = self.nodes[node].storage.oldest_resident(Role.RAW)
        if c is None:
            return self.recorded[node]
        return c * self.nodes[node].storage.partitions[Role.RAW].chunk_items

    def pause(self, reason: str = "query") -> None:
        if not self.paused:
            self.paused = True
            self.log.append({"t_us": self.clock_us, "event": "autonomous-paused", "reason": reason})

    def resume(self) -> None:
        if self.paused:
            self.paused = False
            self.log.append({"t_us": self.clock_us, "event": "autonomous-resumed"})


# --------------------------------------------------------------------------
# planning


@dataclass
class NodeRead:
    node: int
    electrodes: list[int]
    start: int           # sample indices, half open
    stop: int


@dataclass
class QueryPlan:
    ast: QueryAst
    text: str
    nodes: list[int]
    electrodes: dict[int, list[int]]
    t_values: list[int] | None            # candidate times (ms); None: no t in the query
    reads: list[NodeRead]
    fragment: Fragment | None
    predicates: list[str]
    mc_conditions: list[str]
    channels_per_pass: int
    peak_mw: dict[int, float]
    estimate: dict[str, float]
    validated: bool = False

    def describe(self) -> dict:
        return {"query": self.text, "nodes": self.nodes, "predicates": self.predicates,
                "pe_chain": sorted(self.fragment.pes()) if self.fragment else [], "mc_conditions": self.mc_conditions,
                "channels_per_pass": self.channels_per_pass, "t_values": len(self.t_values or []),
                "peak_mw": self.peak_mw, "estimate": self.estimate}


def _t_bounds(cond) -> tuple[float, float, bool, bool]:
    """Bounds on t implied by top-level conjuncts ``t op const``: (lo, hi, lo_strict, hi_strict)."""
    lo, hi, los, his = -math.inf, math.inf, False, False
    items = cond.items if isinstance(cond, And) else (cond,)
    for c in items:
        if not isinstance(c, Compare):
            continue
        l, op, r = c.left, c.op, c.right
        if isinstance(r, TimeExpr) and r.relative and r.offset == 0 and isinstance(l, TimeExpr) and not l.relative:
            l, r = r, l
            op = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}[op]
        if not (isinstance(l, TimeExpr) and l.relative and isinstance(r, TimeExpr) and not r.relative):
            continue
        v = r.offset - l.offset
        if op in (">", ">=", "==") and (v > lo or (v == lo and op == ">")):
            lo, los = v, op == ">"
        if op in ("<", "<=", "==") and (v < hi or (v == hi and op == "<")):
            hi, his = v, op == "<"
    return lo, hi, los, his


def _predicate_z(cluster: QueryCluster, names: Sequence[str], budget: float) -> int:
    """Channels one node can push through the predicate chain in one pass, from the scheduler."""
    key = (tuple(names), round(budget, 6))
    if key in cluster._z_cache:
        return cluster._z_cache[key]
    frag = _fragment(names)
    pes = sorted(frag.pes())
    stages = [Stage(pe.lower(), pe, "any" if i == 0 else f"with:{pes[0].lower()}") for i, pe in enumerate(pes)]
    edges = [Edge(a.lower(), b.lower()) for a, b in frag.edges]
    graph = TaskGraph("query", [Task("predicate", 1.0, stages, edges)], 10.0, budget)
    sched = solve(graph, Cluster(1, [budget], array=cluster.array))
    if not sched.classes:
        raise PlanningError(f"predicate chain {'+'.join(names)} cannot meet the epoch deadline",
                            constraint="latency:predicate")
    z = min(sched.channels_of("predicate"), cluster.array.electrodes)
    cluster._z_cache[key] = z
    return z


def _fragment(names: Sequence[str]) -> Fragment:
    frag = Fragment()
    for nm in names:
        pred = PREDICATES[nm]
        frag.edges += [e for e in pred.wiring() if e not in frag.edges]
        for pe in pred.pes:
            frag.add_load(pe, "query", 0)
    return frag


def plan(ast: QueryAst | str, cluster: QueryCluster, t_step_ms: int | None = None) -> QueryPlan:
    """Map a query onto the cluster: what each node reads, which PEs test it, what it costs."""
    if isinstance(ast, str):
        ast = parse(ast, PREDICATES)
    for call in ast.calls():
        if call.name not in PREDICATES:
            raise PlanningError(f"unknown predicate {call.name!r}", constraint="predicate")
    spm = cluster.samples_per_ms
    nodes = sorted(cluster.nodes) if ast.devices is None else list(ast.devices)
    for n in nodes:
        if n not in cluster.nodes:
            raise PlanningError(f"device {n} is not part of the cluster", constraint="devices")
    electrodes = {n: list(ast.erange.resolve(cluster.array.electrodes)) for n in nodes}
    calls = ast.calls()
    names = list(dict.fromkeys(c.name for c in calls))

    # candidate times
    t_values = None
    if ast.uses_t():
        lo, hi, los, his = _t_bounds(ast.where)
        oldest_ms = min(-(cluster.now_sample(n) - cluster.oldest_sample(n)) / spm for n in nodes) if nodes else 0.0
        hi = min(hi, 0.0)
        lo = max(lo, math.floor(oldest_ms))
        widths = [c.data.trange.hi.offset - c.data.trange.lo.offset for c in calls if c.data.trange.relative]
        step = t_step_ms or max(1, min(widths) if widths else 1)
        t_values = []
        t = math.floor(hi)
        if his and t == hi:
            t -= step
        while t > lo or (t == lo and not los):
            t_values.append(int(t))
            t -= step
        t_values.reverse()

    # storage span every node must read
    spans = []
    if t_values is None:
        spans.append(ast.trange.at(0.0))
        spans += [c.data.trange.at(0.0) for c in calls]
    elif t_values:
        for tr in [ast.trange] + [c.data.trange for c in calls]:
            a = [tr.at(t) for t in (t_values[0], t_values[-1])]
            spans.append((min(x for x, _ in a), max(y for _, y in a)))
    reads = []
    for n in nodes:
        if not spans or not electrodes[n]:
            continue
        lo_ms = min(a for a, _ in spans)
        hi_ms = min(0.0, max(b for _, b in spans))
        now = cluster.now_sample(n)
        start, stop = max(0, now + int(round(lo_ms * spm))), now + int(round(hi_ms * spm))
        if stop > start:
            reads.append(NodeRead(n, electrodes[n], start, stop))

    fragment = None
    z = cluster.array.electrodes
    if names:
        fragment = _fragment(names)
        budget = min(cluster.budgets_mw[n] - cluster.background_mw[n] for n in nodes)
        z = _predicate_z(cluster, names, budget)
        if z <= 0:
            raise PlanningError("power budget leaves no channel for the predicate pipeline",
                                constraint="power-peak:predicate")
    mc = [to_text_cond(c) for c in walk(ast.where) if isinstance(c, Compare)]

    # power: compute phase and transmit phase never overlap on a node
    peak = {}
    for n in nodes:
        node = cluster.nodes[n]
        static = node.power_tally()["total"]
        pe = 0.0
        if fragment is not None:
            pe = sum(node.catalog[p].dyn_per_electrode for p in fragment.pes()) * min(z, len(electrodes[n])) / 1000.0
        radio = cluster.external.active_mw
        peak[n] = static + cluster.background_mw[n] + max(pe, radio)
        if peak[n] > cluster.budgets_mw[n] + 1e-9:
            which = "external-radio" if radio >= pe else "predicate"
            raise PlanningError(f"node {n} would draw {peak[n]:.3f} mW against a budget of {cluster.budgets_mw[n]} mW",
                                constraint=f"power-peak:node{n}:{which}")

    p = QueryPlan(ast, to_text(ast), nodes, electrodes, t_values, reads, fragment, names, mc, z, peak, {})
    p.estimate = _estimate(p, cluster)
    p.validated = True
    return p


def to_text_cond(c) -> str:
    from .language import _cond
    return _cond(c)


# --------------------------------------------------------------------------
# wire format of results


RECORD_HEAD = struct.Struct(">BHiI")       # node, electrode, start sample relative to now, sample count


@dataclass
class Record:
    node: int
    electrode: int
    start_ms: float
    stop_ms: float
    samples: np.ndarray

    def to_dict(self) -> dict:
        return {"node": self.node, "electrode": self.electrode, "start_ms": self.start_ms, "stop_ms": self.stop_ms,
                "samples": len(self.samples)}


def marshal_records(node: int, records: Sequence[tuple[int, int, np.ndarray]], query_id: int = 0) -> list[bytes]:
    """One node's records as external-radio frames.

    Each record is ``node:u8 electrode:u16 start:i32 count:u32`` followed by
    ``count`` big-endian int16 samples; records are concatenated and cut
    into payload-sized frames numbered by ``seq``. A node with nothing to
    report still sends one frame holding a zero count, so the base station
    can tell silence from loss.
    """
    body = bytearray(struct.pack(">I", len(records)))
    for electrode, start, samples in records:
        body += RECORD_HEAD.pack(node, electrode, int(start), len(samples))
        body += np.asarray(samples, dtype=">i2").tobytes()
    return [npack(bytes(body[i:i + MAX_PAYLOAD]), PacketType.EXTERNAL, node, BASE_STATION, query_id % 256, k)
            for k, i in enumerate(range(0, len(body), MAX_PAYLOAD))]


def unmarshal_records(frames: Iterable[bytes]) -> list[tuple[int, int, int, np.ndarray]]:
    packets = sorted((unpack(f) for f in frames), key=lambda p: p.seq)
    body = b"".join(p.payload for p in packets)
    (count,), pos, out = struct.unpack_from(">I", body), 4, []
    for _ in range(count):
        node, electrode, start, n = RECORD_HEAD.unpack_from(body, pos)
        pos += RECORD_HEAD.size
        out.append((node, electrode, start, np.frombuffer(body[pos:pos + 2 * n], dtype=">i2").astype(np.int16)))
        pos += 2 * n
    return out


def _frames_bits(payload_bytes: int) -> int:
    full, rest = divmod(payload_bytes, MAX_PAYLOAD)
    return full * frame_bits(MAX_PAYLOAD) + (frame_bits(rest) if rest else 0)


def _airtime_ms(payload_bytes: int, radio: RadioSpec) -> float:
    return radio.airtime_us(_frames_bits(payload_bytes)) / 1000.0


# --------------------------------------------------------------------------
# execution


@dataclass
class QueryResult:
    plan: QueryPlan
    records: list[Record]
    gaps: list[dict]
    metrics: dict
    frames: dict[int, list[bytes]] = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": r.to_dict()}, sort_keys=True) for r in self.records]
        lines += [json.dumps({"gap": g}, sort_keys=True) for g in self.gaps]
        lines.append(json.dumps({"metrics": self.metrics}, sort_keys=True))
        return "\n".join(lines)


def _eval(cond, ctx) -> bool:
    if isinstance(cond, BoolLit):
        return cond.value
    if isinstance(cond, And):
        return all(_eval(c, ctx) for c in cond.items)
    if isinstance(cond, Or):
        return any(_eval(c, ctx) for c in cond.items)
    if isinstance(cond, Not):
        return not _eval(cond.item, ctx)
    if isinstance(cond, Compare):
        val = lambda o: ctx[o.name] if isinstance(o, Name) else o.at(ctx["t"] if o.relative else 0.0)
        a, b = val(cond.left), val(cond.right)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b, "!=": a != b}[cond.op]
    if isinstance(cond, Call):
        return ctx["call"](cond)
    raise TypeError(cond)


def _merge(intervals: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def execute(plan_: QueryPlan, cluster: QueryCluster, query_id: int = 0, keep_frames: bool = False) -> QueryResult:
    """Run a validated plan; autonomous radio traffic is paused for the duration."""
    if not plan_.validated:
        raise PlanningError("plan has not been validated against the node budgets", constraint="validation")
    ast, spm = plan_.ast, cluster.samples_per_ms
    was_paused = cluster.paused
    cluster.pause("query")
    start_us = cluster.clock_us
    records: list[Record] = []
    gaps: list[dict] = []
    frames: dict[int, list[bytes]] = {}
    read_ms: dict[int, float] = {}
    compute_ms: dict[int, float] = {}
    energy_uj: dict[int, float] = {}
    node_bytes: dict[int, int] = {}
    reads = {r.node: r for r in plan_.reads}
    for n in plan_.nodes:
        node = cluster.nodes[n]
        now = cluster.now_sample(n)
        oldest = cluster.oldest_sample(n)
        rd = reads.get(n)
        data: dict[int, np.ndarray] = {}
        base = 0
        read_ms[n] = 0.0
        energy_uj[n] = 0.0
        if rd is not None:
            base = max(rd.start, oldest)
            if base > rd.start:
                gaps.append({"node": n, "reason": "expired", "start_ms": (rd.start - now) / spm,
                             "stop_ms": (base - now) / spm})
            if rd.stop > base:
                data, res = node.storage.sc_read_many(Role.RAW, rd.electrodes, base, rd.stop, now=start_us)
                read_ms[n] = res.latency_us / 1000.0
                energy_uj[n] = res.energy_nj / 1000.0

        def window(e, tr, t):
            a, b = tr.at(t)
            i, j = now + int(round(a * spm)), now + int(round(b * spm))
            if i < base or j > base + (data[e].size if e in data else 0) or j <= i:
                return None
            return data[e][i - base:j - base]

        scanned_ms = 0.0
        picked: dict[int, list[tuple[int, int]]] = {e: [] for e in plan_.electrodes[n]}
        ts = plan_.t_values if plan_.t_values is not None else [0]
        for t in ts:
            for e in plan_.electrodes[n]:
                def call(c: Call, e=e, t=t):
                    nonlocal scanned_ms
                    targets = [e] if c.data.erange is None else list(c.data.erange.resolve(cluster.array.electrodes))
                    hit = False
                    for te in targets:
                        w = window(te, c.data.trange, t)
                        if w is None:
                            continue
                        scanned_ms += w.size / spm
                        if PREDICATES[c.name].test(cluster, n, w, c.args):
                            hit = True
                            break
                    return hit
                if _eval(ast.where, {"t": t, "e": e, "node": n, "call": call}):
                    a, b = ast.trange.at(t)
                    i, j = now + int(round(a * spm)), min(now, now + int(round(b * spm)))
                    if j > i:
                        picked[e].append((i, j))
        # PE passes: scanned data spread over the channels the scheduler grants
        compute_ms[n] = scanned_ms / max(1, plan_.channels_per_pass)
        if plan_.fragment is not None:
            dyn = sum(node.catalog[p].dyn_per_electrode for p in plan_.fragment.pes()) / 1000.0
            energy_uj[n] += dyn * min(plan_.channels_per_pass, len(plan_.electrodes[n])) * compute_ms[n]
        out = []
        for e, iv in picked.items():
            for i, j in _merge(iv):
                lo = max(i, base)
                if lo > i:
                    gaps.append({"node": n, "electrode": e, "reason": "expired", "start_ms": (i - now) / spm,
                                 "stop_ms": (lo - now) / spm})
                if j <= lo or e not in data:
                    continue
                samples = data[e][lo - base:j - base]
                out.append((e, lo - now, samples))
                records.append(Record(n, e, (lo - now) / spm, (j - now) / spm, samples))
        fr = marshal_records(n, out, query_id)
        if keep_frames:
            frames[n] = fr
        nbytes = 4 + sum(RECORD_HEAD.size + 2 * len(s) for _, _, s in out)
        node_bytes[n] = nbytes
        energy_uj[n] += cluster.external.active_mw * _airtime_ms(nbytes, cluster.external)
    dispatch_ms = _airtime_ms(len(plan_.text.encode()), cluster.external)
    # the storage controller streams into the predicate PEs, so reading and testing overlap
    node_ms = max((max(read_ms[n], compute_ms[n]) for n in plan_.nodes), default=0.0)
    # every node's reply frames share the one external channel
    radio_ms = sum(_airtime_ms(b, cluster.external) for b in node_bytes.values())
    payload_total = sum(node_bytes.values())
    latency_ms = dispatch_ms + node_ms + radio_ms
    bottleneck = max(node_ms, dispatch_ms + radio_ms)      # dispatch and results share the external radio
    cluster.clock_us = start_us + latency_ms * 1000.0
    cluster.network.reserve(start_us, cluster.clock_us, "query")
    if not was_paused:
        cluster.resume()
    metrics = {
        "latency_ms": latency_ms, "qps": 1000.0 / bottleneck if bottleneck > 0 else math.inf,
        "dispatch_ms": dispatch_ms, "read_ms": max(read_ms.values(), default=0.0),
        "compute_ms": max(compute_ms.values(), default=0.0), "radio_ms": radio_ms,
        "result_bytes": payload_total, "records": len(records), "channels_per_pass": plan_.channels_per_pass,
        "energy_uj": sum(energy_uj.values()), "peak_mw": max(plan_.peak_mw.values(), default=0.0),
    }
    return QueryResult(plan_, records, gaps, metrics, frames)


def _estimate(p: QueryPlan, cluster: QueryCluster) -> dict:
    """Upper-bound cost assuming every read sample is returned."""
    spm = cluster.samples_per_ms
    read = max((len(set().union(*(cluster.nodes[r.node].storage.touched_pages(Role.RAW, e, r.start, r.stop)
                                  for e in r.electrodes))) * cluster.nodes[r.node].geometry.read_us_per_page / 1000.0
                for r in p.reads), default=0.0)
    nbytes = sum(2 * (r.stop - r.start) * len(r.electrodes) for r in p.reads)
    return {"read_ms": read, "radio_ms_max": _airtime_ms(nbytes, cluster.external),
            "data_ms": max(((r.stop - r.start) / spm for r in p.reads), default=0.0)}


def run_query(text: str, cluster: QueryCluster, **kw) -> QueryResult:
    return execute(plan(parse(text, PREDICATES), cluster), cluster, **kw)


# --------------------------------------------------------------------------
# canned queries


def canned(name: str, history_ms: int = 100, template: int = 0, window_ms: int = 4) -> str:
    """Q1 seizure-positive windows, Q2 windows matching a template by hash, Q3 everything."""
    w, h = window_ms, history_ms
    if name == "Q1":
        return f"from * select data[:][t-{w}:t] where seizure_detect(data[t-{w}:t]) and t > -{h} and t <= 0"
    if name == "Q2":
        return f"from * select data[:][t-{w}:t] where hash_match(data[t-{w}:t], {template}) and t > -{h} and t <= 0"
    if name == "Q2-dtw":
        return f"from * select data[:][t-{w}:t] where dtw_match(data[t-{w}:t], {template}) and t > -{h} and t <= 0"
    if name == "Q3":
        return f"from * select data[:][-{h}:0] where true"
    raise KeyError(name)


# --------------------------------------------------------------------------
# session


class QuerySession:
    """Queries run one at a time in arrival order; a line-oriented front end
    for interactive use."""

    def __init__(self, cluster: QueryCluster):
        self.cluster = cluster
        self.queue: deque[str] = deque()
        self.done = 0

    def submit(self, text: str) -> None:
        self.queue.append(text)

    def drain(self) -> list[QueryResult]:
        out = []
        while self.queue:
            out.append(run_query(self.queue.popleft(), self.cluster, query_id=self.done))
            self.done += 1
        return out

    def handle(self, line: str) -> tuple[bool, str]:
        """Process one input line; returns (keep going, text to print)."""
        line = line.strip()
        if not line:
            return True, ""
        if line in (":quit", ":q", ":exit"):
            return False, ""
        if line == ":pause":
            self.cluster.pause("operator")
            return True, json.dumps({"autonomous": "paused"})
        if line == ":resume":
            self.cluster.resume()
            return True, json.dumps({"autonomous": "running"})
        if line.startswith(":"):
            return True, json.dumps({"error": f"unknown command {line}"})
        try:
            res = run_query(line, self.cluster, query_id=self.done)
            self.done += 1
            return True, res.to_jsonl()
        except QuerySyntaxError as exc:
            return True, json.dumps({"error": str(exc), "line": exc.line, "column": exc.column,
                                     "expected": list(exc.expected)})
        except (PlanningError, DataExpiredError) as exc:
            return True, json.dumps({"error": str(exc), "constraint": getattr(exc, "constraint", None)})
