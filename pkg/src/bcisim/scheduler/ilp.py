"""ILP construction: channels per flow class under latency, power, radio and PE capacity rows.

All rows are written ``A x <= b`` with ``x`` the integer channel counts of
the flow classes. Units: power rows in mW, time rows in µs.

The epoch's radio time is laid out in phases, one per task and one more
for tasks whose stages reply to the group origin. Every node that has
something to say in a phase gets one slot in it. A reply phase waits for
its task's receive-side processing, which shows up as an idle gap.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flows import FlowClass, classify, critical_latency, enumerate_flows, symmetric
from .taskgraph import Cluster, TaskGraph


@dataclass
class Row:
    name: str
    kind: str                   # latency | power-peak | power-avg | radio | capacity | custom
    coeffs: dict[int, float]
    rhs: float


@dataclass
class ClassModel:
    """Per-class coefficients, kept to turn a solution back into node configs."""
    cls: FlowClass
    lat_fixed_ms: float                   # critical path of the task chain ending in this task
    dyn_mw: np.ndarray                    # per node, per channel
    tx_bits: np.ndarray                   # per node, payload bits per channel per epoch
    tx_fixed: np.ndarray                  # per node, channel-independent payload bits per epoch
    reply_bits: np.ndarray                # per node, reply-phase bits per channel per epoch
    cap_use: dict[tuple[int, str], float]
    uses_radio: bool
    loads: dict[tuple[int, str], float]   # (node, PE) -> channels per unit of x
    chain: tuple[str, ...] = ()           # this task and the tasks it runs after
    origins: np.ndarray | None = None     # per node, groups of this class sourced there


@dataclass
class IlpInstance:
    names: list[str]
    weights: np.ndarray
    rows: list[Row]
    ub: np.ndarray
    lb: np.ndarray | None = None
    models: list[ClassModel] = field(default_factory=list)
    cluster: Cluster | None = None
    graph: TaskGraph | None = None
    pruned: list[str] = field(default_factory=list)
    const: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.lb is None:
            self.lb = np.zeros_like(self.ub)
        if np.any(~np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ValueError("objective weights must be finite and positive")

    @property
    def n(self) -> int:
        return len(self.names)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.zeros((len(self.rows), self.n))
        b = np.zeros(len(self.rows))
        for i, r in enumerate(self.rows):
            for j, v in r.coeffs.items():
                A[i, j] = v
            b[i] = r.rhs
        return A, b

    def slack(self, x) -> list[tuple[str, float]]:
        A, b = self.matrix()
        s = b - A @ np.asarray(x, dtype=float)
        return [(r.name, float(v)) for r, v in zip(self.rows, s)]

    def feasible(self, x, tol: float = 1e-7) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        A, b = self.matrix()
        return bool(np.all(A @ x <= b + tol * np.maximum(1.0, np.abs(b))))

    def objective(self, x) -> float:
        return float(self.weights @ np.asarray(x, dtype=float))


def simple_instance(weights: Sequence[float], A, b, ub, names: Sequence[str] | None = None) -> IlpInstance:
    """Instance from raw matrices (used by tests and the oracle harness)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows = [Row(f"r{i}", "custom", {j: float(v) for j, v in enumerate(A[i]) if v != 0}, float(b[i]))
            for i in range(A.shape[0])]
    names = list(names) if names is not None else [f"z{j}" for j in range(len(weights))]
    return IlpInstance(names, np.asarray(weights, float), rows, np.asarray(ub, float))


def task_chain(graph: TaskGraph, name: str) -> tuple[str, ...]:
    chain = []
    t = graph.task(name)
    while True:
        chain.append(t.name)
        if t.after is None:
            return tuple(chain)
        t = graph.task(t.after)


def chain_latency_ms(graph: TaskGraph, name: str, catalog) -> float:
    return sum(critical_latency(graph.task(t), catalog) for t in task_chain(graph, name))


def _class_model(fc: FlowClass, graph: TaskGraph, cluster: Cluster) -> ClassModel:
    N = cluster.n_nodes
    task = graph.task(fc.task)
    cat = cluster.catalog
    dyn = np.zeros(N)
    tx = np.zeros(N)
    txf = np.zeros(N)
    reply = np.zeros(N)
    cap: dict[tuple[int, str], float] = defaultdict(float)
    loads: dict[tuple[int, str], float] = defaultdict(float)
    seen_shared: set = set()
    uses_radio = False
    stage_by_name = {s.name: s for s in task.stages}
    origins = np.zeros(N)
    seen_groups: set = set()
    for f in fc.flows:
        origin = f.node_of(task.group_by) if task.group_by else f.assignment[0][1]
        if f.group not in seen_groups:
            seen_groups.add(f.group)
            origins[origin] += 1
        for sname, node in f.assignment:
            s = stage_by_name[sname]
            if s.shared:
                key = (f.group, sname)
                if key in seen_shared:
                    continue
                seen_shared.add(key)
            spec = cat[s.pe]
            dyn[node] += s.dyn_scale * spec.dyn_per_electrode / 1000.0
            cap[(node, spec.name)] += s.rate
            loads[(node, spec.name)] += 1.0
            if s.reply_bits and node != origin:
                reply[node] += s.reply_bits
                uses_radio = True
        for e in task.edges:
            a, b = f.node_of(e.src), f.node_of(e.dst)
            if a == b:
                continue
            uses_radio = True
            if e.broadcast:
                key = (f.group, "edge", e.src, e.dst)
                if key in seen_shared:
                    continue
                seen_shared.add(key)
            tx[a] += e.bits_per_channel
            txf[a] += e.bits_fixed
    return ClassModel(fc, chain_latency_ms(graph, fc.task, cat), dyn, tx, txf, reply, dict(cap), uses_radio,
                      dict(loads), task_chain(graph, fc.task), origins)


@dataclass
class RadioLayout:
    """Airtime of every (phase, node) slot as ``coef @ x + const`` (µs), plus idle gaps.

    ``const`` already holds the frame overhead of one partial frame and the
    guard interval for every slot that can carry data.
    """
    phases: list[tuple[str, str]]                 # (task, "main" | "reply") in epoch order
    coef: dict[tuple[int, int], np.ndarray]       # (phase index, node) -> per-class µs per channel
    const: dict[tuple[int, int], float]
    gaps: dict[int, float]                        # phase index -> idle µs before it
    per_bit: float
    us_per_bit: float

    def total_coef(self, n_vars: int) -> np.ndarray:
        out = np.zeros(n_vars)
        for v in self.coef.values():
            out += v
        return out

    def total_const(self, exclude_gaps_of: tuple[str, ...] = ()) -> float:
        gaps = sum(g for p, g in self.gaps.items() if self.phases[p][0] not in exclude_gaps_of)
        return float(sum(self.const.values()) + gaps)


def radio_layout(graph: TaskGraph, models: list[ClassModel], cluster: Cluster) -> RadioLayout:
    N = cluster.n_nodes
    per_bit, per_slot = cluster.frame_overhead()
    us_per_bit = 1e6 / cluster.radio.rate_bps
    phases = []
    for t in graph.tasks:
        phases += [(t.name, "main"), (t.name, "reply")]
    index = {p: i for i, p in enumerate(phases)}
    coef: dict[tuple[int, int], np.ndarray] = {}
    const: dict[tuple[int, int], float] = defaultdict(float)
    active: set[tuple[int, int]] = set()
    for j, m in enumerate(models):
        pm, pr = index[(m.cls.task, "main")], index[(m.cls.task, "reply")]
        for n in range(N):
            for p, bits, fixed in ((pm, m.tx_bits[n], m.tx_fixed[n]), (pr, m.reply_bits[n], 0.0)):
                if bits or fixed:
                    active.add((p, n))
                    if bits:
                        coef.setdefault((p, n), np.zeros(len(models)))[j] += bits * (1 + per_bit) * us_per_bit
                    const[(p, n)] += fixed * (1 + per_bit) * us_per_bit
    for key in active:
        const[key] += per_slot * us_per_bit + cluster.radio.guard_us
    gaps = {}
    for p, (tname, kind) in enumerate(phases):
        if kind == "reply" and any(key[0] == p for key in active):
            gaps[p] = critical_latency(graph.task(tname), cluster.catalog) * 1000.0
    return RadioLayout(phases, coef, dict(const), gaps, per_bit, us_per_bit)


def phase_extras(graph: TaskGraph, models: list[ClassModel], cluster: Cluster) -> np.ndarray:
    """Largest instantaneous add-on power (mW) per node among its radio/DAC phases."""
    N = cluster.n_nodes
    intra = np.zeros(N, dtype=bool)
    ext = np.zeros(N, dtype=bool)
    dac = np.zeros(N, dtype=bool)
    for m in models:
        t = graph.task(m.cls.task)
        intra |= (m.reply_bits > 0)
        for f in m.cls.flows:
            if m.reply_bits.any():
                intra[f.node_of(t.group_by) if t.group_by else f.assignment[0][1]] = True
            for e in t.edges:
                a, b = f.node_of(e.src), f.node_of(e.dst)
                if a != b:
                    intra[a] = True
                    if e.broadcast:
                        intra[:] = True
                    else:
                        intra[b] = True
            for s in t.stages:
                if s.external:
                    ext[f.node_of(s.name)] = True
                if s.stimulates:
                    dac[f.node_of(s.name)] = True
    # the radios and the DAC never run at the same instant (phases are serialized in the epoch)
    extra = np.zeros(N)
    extra = np.maximum(extra, np.where(intra, cluster.radio.active_mw, 0.0))
    extra = np.maximum(extra, np.where(ext, cluster.external.active_mw, 0.0))
    extra = np.maximum(extra, np.where(dac, cluster.periph.dac_stim_power, 0.0))
    return extra


def build_models(graph: TaskGraph, cluster: Cluster, collapse: bool | None = None
                 ) -> tuple[list[ClassModel], list[str]]:
    if collapse is None:
        collapse = symmetric(graph, cluster)
    flows = enumerate_flows(graph, cluster)
    classes = classify(flows, collapse)
    deadline_us = graph.deadline_ms * 1000.0
    models, pruned = [], []
    for fc in classes:
        m = _class_model(fc, graph, cluster)
        if m.lat_fixed_ms * 1000.0 > deadline_us:
            pruned.append(f"{fc.task}{fc.key[1:]}: fixed latency {m.lat_fixed_ms:.3f} ms exceeds the deadline")
            continue
        models.append(m)
    return models, pruned


def build_ilp(graph: TaskGraph, cluster: Cluster, collapse: bool | None = None) -> IlpInstance:
    """Enumerate flows, group them into classes, and write the constraint rows."""
    models, pruned = build_models(graph, cluster, collapse)
    return assemble(graph, cluster, models, pruned)


def assemble(graph: TaskGraph, cluster: Cluster, models: list[ClassModel], pruned: list[str],
             extra: np.ndarray | None = None, multiplicity: Sequence[int] | None = None) -> IlpInstance:
    N = cluster.n_nodes
    names = [f"{m.cls.task}#{k}" for k, m in enumerate(models)]
    mult = [m.cls.multiplicity for m in models] if multiplicity is None else list(multiplicity)
    weights = np.array([graph.task(m.cls.task).weight * k for m, k in zip(models, mult)])
    rows: list[Row] = []
    static = cluster.static_mw()
    if extra is None:
        extra = phase_extras(graph, models, cluster)
    layout = radio_layout(graph, models, cluster)
    radio_coef = layout.total_coef(len(models))
    radio_const = layout.total_const()

    # (a) latency: the task chain's critical path plus every slot and foreign gap of the epoch
    for j, m in enumerate(models):
        if m.uses_radio:
            rows.append(Row(f"latency:{names[j]}", "latency",
                            {k: float(v) for k, v in enumerate(radio_coef) if v},
                            graph.deadline_ms * 1000.0 - m.lat_fixed_ms * 1000.0 - layout.total_const(m.chain)))
    # (b) power, peak and radio-duty average, per node
    seen = set()
    for n in range(N):
        dyn = {j: float(m.dyn_mw[n]) for j, m in enumerate(models) if m.dyn_mw[n]}
        rhs = cluster.budgets_mw[n] - static - float(extra[n])
        key = ("peak", tuple(sorted(dyn.items())), round(rhs, 12))
        if key not in seen:
            seen.add(key)
            rows.append(Row(f"power-peak:node{n}", "power-peak", dyn, rhs))
        duty = cluster.radio.active_mw / cluster.epoch_us if extra[n] else 0.0
        avg = dict(dyn)
        for j, v in enumerate(radio_coef):
            if v and duty:
                avg[j] = avg.get(j, 0.0) + duty * v
        rhs_avg = cluster.budgets_mw[n] - static - duty * radio_const
        key = ("avg", tuple(sorted(avg.items())), round(rhs_avg, 12))
        if key not in seen:
            seen.add(key)
            rows.append(Row(f"power-avg:node{n}", "power-avg", avg, rhs_avg))
    # (c) radio time within one epoch, one transmitter at a time
    if radio_const or radio_coef.any():
        rows.append(Row("radio:epoch", "radio", {k: float(v) for k, v in enumerate(radio_coef) if v},
                        cluster.epoch_us - radio_const))
    # (d) PE capacity at full clock, shared PEs carry interleaved channels additively
    cap_rows: dict[tuple[int, str], dict[int, float]] = defaultdict(dict)
    for j, m in enumerate(models):
        for key, use in m.cap_use.items():
            cap_rows[key][j] = cap_rows[key].get(j, 0.0) + use
    # (e) a node cannot source more channels of a task than it has electrodes
    for n in range(N):
        for t in graph.tasks:
            cs = {j: float(m.origins[n]) for j, m in enumerate(models) if m.cls.task == t.name and m.origins[n]}
            key = ("chan", t.name, tuple(sorted(cs.items())))
            if cs and key not in seen and (len(cs) > 1 or max(cs.values()) > 1):
                seen.add(key)
                rows.append(Row(f"channels:node{n}:{t.name}", "channels", cs, float(cluster.array.electrodes)))
    ub = np.full(len(models), np.inf)
    for (n, pe), cs in sorted(cap_rows.items()):
        capacity = cluster.catalog[pe].capacity_k1
        key = ("cap", pe, tuple(sorted(cs.items())))
        if key not in seen:
            seen.add(key)
            rows.append(Row(f"capacity:node{n}:{pe}", "capacity", cs, float(capacity)))
        for j, use in cs.items():
            if use > 0:
                ub[j] = min(ub[j], math.floor(capacity / use + 1e-9))
    ub[~np.isfinite(ub)] = cluster.array.electrodes
    ub = np.minimum(ub, cluster.array.electrodes)
    return IlpInstance(names, weights, rows, ub, models=models, cluster=cluster, graph=graph, pruned=pruned,
                       const={"static_mw": static, "extra_mw": [float(e) for e in extra],
                              "radio_const_us": radio_const, "multiplicity": mult})
