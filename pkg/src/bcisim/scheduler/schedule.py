"""Solved channel counts turned into node configurations and a TDMA plan,
and the one-epoch replay that holds a schedule to the simulator."""
from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InfeasibleError, ScheduleViolation
from ..network import Network, Slot, TdmaSchedule
from ..node import Fragment, Node, configure_pipeline
from ..packet import MAX_PAYLOAD, PacketType, frame_bits, npack
from .flows import classify, critical_latency, enumerate_task_flows, origin_stage
from .ilp import ClassModel, IlpInstance, _class_model, assemble, build_ilp, phase_extras
from .solver import Solution, exhaustive_solve, solve_instance
from .taskgraph import Cluster, TaskGraph

EXHAUSTIVE_BOX = 200_000        # "auto" enumerates when the integer box is at most this large


@dataclass
class ClassPlan:
    name: str
    task: str
    channels: int
    multiplicity: int
    weight: float
    latency_fixed_ms: float
    uses_radio: bool
    chain: list[str]


@dataclass
class NodePlan:
    node: int
    fragment: Fragment
    dividers: dict[str, int] = field(default_factory=dict)
    external: bool = False
    stimulates: bool = False


@dataclass
class Schedule:
    graph: TaskGraph
    n_nodes: int
    budgets_mw: list[float]
    epoch_us: float
    classes: list[ClassPlan]
    nodes: list[NodePlan]
    tdma: TdmaSchedule
    phases: list[str]
    gaps_us: dict[str, float]
    slot_bits: dict[tuple[int, int], int]        # (phase index, node) -> payload bits per epoch
    slack: dict[str, float]
    objective: float
    method: str = "bnb"
    solve_seconds: float = 0.0
    pruned: list[str] = field(default_factory=list)

    @property
    def z(self) -> dict[str, int]:
        return {c.name: c.channels for c in self.classes}

    @property
    def deadline_ms(self) -> float:
        return self.graph.deadline_ms

    def channels_of(self, task: str) -> int:
        """Channels summed over every group of ``task`` in the cluster."""
        return sum(c.channels * c.multiplicity for c in self.classes if c.task == task)

    def radio_end_us(self) -> float:
        if not self.tdma.slots:
            return 0.0
        return max(s.end_us for s in self.tdma.slots) + self.tdma.guard_us

    def predicted_latency_ms(self, cls: ClassPlan) -> float:
        """Chain critical path plus the radio part of the epoch that is not its own processing."""
        if not cls.uses_radio or not self.tdma.slots:
            return cls.latency_fixed_ms
        own_gaps = sum(g for p, g in self.gaps_us.items() if p.split(":")[0] in cls.chain)
        return cls.latency_fixed_ms + (self.radio_end_us() - own_gaps) / 1000.0

    # ------------------------------------------------------------------ document form
    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "n_nodes": self.n_nodes,
            "budgets_mw": list(self.budgets_mw),
            "epoch_us": self.epoch_us,
            "objective": self.objective,
            "method": self.method,
            "solve_seconds": self.solve_seconds,
            "classes": [c.__dict__ for c in self.classes],
            "nodes": [{"node": p.node, "fragment": fragment_to_dict(p.fragment), "dividers": p.dividers,
                       "external": p.external, "stimulates": p.stimulates} for p in self.nodes],
            "tdma": self.tdma.to_dict(),
            "phases": self.phases,
            "gaps_us": self.gaps_us,
            "slot_bits": [[p, n, b] for (p, n), b in sorted(self.slot_bits.items())],
            "slack": self.slack,
            "pruned": self.pruned,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            graph=TaskGraph.from_dict(d["graph"]), n_nodes=int(d["n_nodes"]), budgets_mw=list(d["budgets_mw"]),
            epoch_us=float(d["epoch_us"]), classes=[ClassPlan(**c) for c in d["classes"]],
            nodes=[NodePlan(p["node"], fragment_from_dict(p["fragment"]), dict(p["dividers"]),
                            p.get("external", False), p.get("stimulates", False)) for p in d["nodes"]],
            tdma=TdmaSchedule.from_dict(d["tdma"]), phases=list(d["phases"]), gaps_us=dict(d["gaps_us"]),
            slot_bits={(int(p), int(n)): int(b) for p, n, b in d["slot_bits"]}, slack=dict(d["slack"]),
            objective=float(d["objective"]), method=d.get("method", "bnb"),
            solve_seconds=float(d.get("solve_seconds", 0.0)), pruned=list(d.get("pruned", [])))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Schedule":
        with open(path) as fh:
            return cls.loads(fh.read())


def fragment_to_dict(f: Fragment) -> dict:
    return {"edges": [list(e) for e in f.edges], "loads": f.loads, "rates": f.rates, "scales": f.scales,
            "isolated": sorted(f.isolated)}


def fragment_from_dict(d: dict) -> Fragment:
    return Fragment([tuple(e) for e in d.get("edges", [])],
                    {k: {t: int(c) for t, c in v.items()} for k, v in d.get("loads", {}).items()},
                    set(d.get("isolated", [])), {k: dict(v) for k, v in d.get("rates", {}).items()},
                    {k: dict(v) for k, v in d.get("scales", {}).items()})


# --------------------------------------------------------------------------
# from a solution to a schedule

def slot_airtime_us(bits: float, rate_bps: float, max_payload: int = MAX_PAYLOAD) -> float:
    """Exact on-air time of ``bits`` payload bits split into full frames plus one remainder."""
    if bits <= 0:
        return 0.0
    nbytes = math.ceil(bits / 8)
    full, rest = divmod(nbytes, max_payload)
    total = full * frame_bits(max_payload) + (frame_bits(rest) if rest else 0)
    return total / rate_bps * 1e6


def _add_flow_loads(frags, node_of, m: ClassModel, graph: TaskGraph, name: str, x: int, flags) -> None:
    task = graph.task(m.cls.task)
    stage_by_name = {s.name: s for s in task.stages}
    seen = set()
    for f in m.cls.flows:
        for sname, node in f.assignment:
            s = stage_by_name[sname]
            if s.shared:
                if (f.group, sname) in seen:
                    continue
                seen.add((f.group, sname))
            n = node_of(node)
            frags[n].add_load(s.pe, f"{name}.{sname}", x, s.rate, s.dyn_scale)
            if s.external:
                flags[n]["external"] = True
            if s.stimulates:
                flags[n]["stimulates"] = True
        for e in task.edges:
            a, b = f.node_of(e.src), f.node_of(e.dst)
            pa, pb = stage_by_name[e.src].pe.upper(), stage_by_name[e.dst].pe.upper()
            if a == b and pa != pb:
                frags[node_of(a)].edges.append((pa, pb))


def _slot_bits(inst: IlpInstance, x: np.ndarray) -> dict[tuple[int, int], int]:
    graph = inst.graph
    phases = [(t.name, k) for t in graph.tasks for k in ("main", "reply")]
    index = {p: i for i, p in enumerate(phases)}
    out: dict[tuple[int, int], float] = {}
    for j, m in enumerate(inst.models):
        if x[j] <= 0:
            continue
        pm, pr = index[(m.cls.task, "main")], index[(m.cls.task, "reply")]
        for n in range(inst.cluster.n_nodes):
            main = m.tx_bits[n] * x[j] + m.tx_fixed[n]
            if main:
                out[(pm, n)] = out.get((pm, n), 0.0) + main
            if m.reply_bits[n]:
                out[(pr, n)] = out.get((pr, n), 0.0) + m.reply_bits[n] * x[j]
    return {k: int(math.ceil(v - 1e-9)) for k, v in out.items() if v > 0}


def _layout_tdma(graph: TaskGraph, cluster: Cluster, slot_bits) -> tuple[TdmaSchedule, list[str], dict[str, float]]:
    phase_names = []
    for t in graph.tasks:
        phase_names += [t.name, f"{t.name}:reply"]
    slots, gaps, t_us = [], {}, 0.0
    guard = cluster.radio.guard_us
    for p, pname in enumerate(phase_names):
        nodes = sorted(n for (q, n) in slot_bits if q == p)
        if not nodes:
            continue
        if pname.endswith(":reply"):
            gap = critical_latency(graph.task(pname.split(":")[0]), cluster.catalog) * 1000.0
            gaps[pname] = gap
            t_us += gap
        for n in nodes:
            d = slot_airtime_us(slot_bits[(p, n)], cluster.radio.rate_bps, cluster.max_payload)
            slots.append(Slot(n, p, t_us, d))
            t_us += d + guard
    return TdmaSchedule(cluster.epoch_us, slots, guard), phase_names, gaps


def build_schedule(inst: IlpInstance, sol: Solution, template: Fragment | None = None,
                   template_flags: dict | None = None) -> Schedule:
    """Turn ``sol`` into per-node fragments, clock dividers and a TDMA plan.

    With ``template`` every node receives a copy of the same fragment (the
    replicated single-node schedule).
    """
    if inst.graph is None or inst.cluster is None:
        raise ConfigurationError("a schedule needs an instance built from a task graph")
    graph, cluster = inst.graph, inst.cluster
    N = cluster.n_nodes
    x = np.asarray(sol.x, dtype=int)
    mult = inst.const.get("multiplicity") or [m.cls.multiplicity for m in inst.models]
    if template is None:
        frags = [Fragment() for _ in range(N)]
        flags = [{"external": False, "stimulates": False} for _ in range(N)]
        for j, m in enumerate(inst.models):
            if x[j] > 0:
                _add_flow_loads(frags, lambda n: n, m, graph, inst.names[j], int(x[j]), flags)
    else:
        frags = [copy.deepcopy(template) for _ in range(N)]
        flags = [dict(template_flags or {"external": False, "stimulates": False}) for _ in range(N)]
    plans = []
    for n in range(N):
        frags[n].edges = list(dict.fromkeys(frags[n].edges))
        probe = Node(n, cluster.array, cluster.catalog, cluster.periph, cluster.geometry, cluster.budgets_mw[n])
        try:
            pg = configure_pipeline(probe, frags[n])
        except ConfigurationError as exc:
            raise ScheduleViolation(f"node {n}: {exc}", constraint=f"capacity:node{n}") from None
        plans.append(NodePlan(n, frags[n], {k: inst_.divider.k for k, inst_ in pg.nodes.items()},
                              flags[n]["external"], flags[n]["stimulates"]))
    bits = _slot_bits(inst, x)
    tdma, phase_names, gaps = _layout_tdma(graph, cluster, bits)
    classes = [ClassPlan(inst.names[j], m.cls.task, int(x[j]), int(mult[j]), float(graph.task(m.cls.task).weight),
                         float(m.lat_fixed_ms), bool(m.uses_radio), list(m.chain))
               for j, m in enumerate(inst.models)]
    slack = {name: v for name, v in inst.slack(x)}
    return Schedule(graph, N, list(cluster.budgets_mw), cluster.epoch_us, classes, plans, tdma, phase_names, gaps,
                    bits, slack, float(inst.weights @ x), sol.method, sol.seconds, list(inst.pruned))


# --------------------------------------------------------------------------
# solve entry points

def _run_solver(inst: IlpInstance, method: str, time_limit: float | None) -> Solution:
    if method == "auto":
        box = float(np.prod(inst.ub - inst.lb + 1)) if inst.n else 1.0
        method = "exhaustive" if box <= EXHAUSTIVE_BOX else "bnb"
    if method == "exhaustive":
        return exhaustive_solve(inst)
    if method == "bnb":
        return solve_instance(inst, time_limit=time_limit)
    raise ValueError(f"unknown solve method {method!r}")


def solve(graph: TaskGraph | IlpInstance, cluster: Cluster | None = None, *, method: str = "bnb",
          time_limit: float | None = None, collapse: bool | None = None) -> Schedule:
    """Optimal schedule of ``graph`` on ``cluster`` (or of a prebuilt instance)."""
    t0 = time.perf_counter()
    if isinstance(graph, IlpInstance):
        inst = graph
    else:
        if cluster is None:
            raise ConfigurationError("solve needs a cluster")
        inst = build_ilp(graph, cluster, collapse)
    sol = _run_solver(inst, method, time_limit)
    sched = build_schedule(inst, sol)
    sched.solve_seconds = time.perf_counter() - t0
    return sched


def reduced_instance(graph: TaskGraph, cluster: Cluster) -> tuple[IlpInstance, Fragment, dict]:
    """Single-node formulation of a symmetric graph on identical nodes.

    Only the groups sourced at node 0 are enumerated. By symmetry every node
    carries the sum over nodes of what those groups place, so each per-node
    vector becomes uniform; rows that couple nodes (radio, latency) then sum
    to ``N`` times the per-node share.
    """
    if not cluster.homogeneous:
        raise ConfigurationError("reduced solve needs identical node budgets; use solve() instead")
    if graph.has_absolute_placement():
        raise ConfigurationError("reduced solve needs a graph without fixed node placements; use solve() instead")
    graph.check(cluster.catalog)
    N = cluster.n_nodes
    raw_models, models, mult, pruned = [], [], [], []
    for task in graph.tasks:
        flows = enumerate_task_flows(task, N, pin={origin_stage(task): 0})
        for fc in classify(flows, collapse=True):
            m = _class_model(fc, graph, cluster)
            if m.lat_fixed_ms > graph.deadline_ms:
                pruned.append(f"{fc.task}{fc.key[1:]}: fixed latency {m.lat_fixed_ms:.3f} ms exceeds the deadline")
                continue
            raw_models.append(m)
            models.append(_uniform(m, N))
            mult.append(N * len(fc.groups))
    extra = np.full(N, phase_extras(graph, raw_models, cluster).max() if raw_models else 0.0)
    inst = assemble(graph, cluster, models, pruned, extra=extra, multiplicity=mult)
    inst.const["raw_models"] = raw_models
    template = Fragment()
    flags = [{"external": False, "stimulates": False}]
    return inst, template, flags[0]


def _uniform(m: ClassModel, N: int) -> ClassModel:
    cap = {}
    loads = {}
    for (_, pe), v in m.cap_use.items():
        cap[pe] = cap.get(pe, 0.0) + v
    for (_, pe), v in m.loads.items():
        loads[pe] = loads.get(pe, 0.0) + v
    full = lambda v: np.full(N, float(v.sum()))
    return ClassModel(m.cls, m.lat_fixed_ms, full(m.dyn_mw), full(m.tx_bits), full(m.tx_fixed), full(m.reply_bits),
                      {(n, pe): v for n in range(N) for pe, v in cap.items()}, m.uses_radio,
                      {(n, pe): v for n in range(N) for pe, v in loads.items()}, m.chain, full(m.origins))


def reduced_solve(graph: TaskGraph, cluster: Cluster, *, time_limit: float | None = None) -> Schedule:
    """Solve one node's share of a symmetric deployment and replicate it with slot offsets."""
    t0 = time.perf_counter()
    inst, template, flags = reduced_instance(graph, cluster)
    sol = solve_instance(inst, time_limit=time_limit)
    x = np.asarray(sol.x, dtype=int)
    for j, m in enumerate(inst.const["raw_models"]):
        if x[j] > 0:
            _add_flow_loads([template], lambda n: 0, m, graph, inst.names[j], int(x[j]), [flags])
    sol.method = "reduced"
    sched = build_schedule(inst, sol, template=template, template_flags=flags)
    sched.solve_seconds = time.perf_counter() - t0
    return sched


# --------------------------------------------------------------------------
# validation by replay

@dataclass
class ValidationReport:
    ok: bool
    peak_mw: dict[int, float]
    avg_mw: dict[int, float]
    latency_ms: dict[str, float]
    radio_busy_us: float
    frames: int
    violations: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "peak_mw": self.peak_mw, "avg_mw": self.avg_mw, "latency_ms": self.latency_ms,
                "radio_busy_us": self.radio_busy_us, "frames": self.frames,
                "violations": [list(v) for v in self.violations]}


def _phase_ptype(schedule: Schedule, p: int) -> PacketType:
    name = schedule.phases[p]
    if name.endswith(":reply"):
        return PacketType.CONTROL
    task = schedule.graph.task(name)
    return PacketType.HASH if any(s.pe.upper() == "NPACK" for s in task.stages) else PacketType.SIGNAL


def validate_schedule(schedule: Schedule, cluster: Cluster | None = None, *, strict: bool = True
                      ) -> ValidationReport:
    """Replay one epoch of ``schedule`` on simulated nodes and radio.

    Checks every node's draw in every phase of the epoch against its
    budget, every PE's load against its clock, every slot's frames against
    the slot and the epoch, and every response path against the deadline.
    With ``strict`` the first violation raises :class:`ScheduleViolation`
    naming the constraint; otherwise all violations are collected.
    """
    if cluster is None:
        cluster = Cluster(schedule.n_nodes, schedule.budgets_mw, epoch_ms=schedule.epoch_us / 1000.0)
    violations: list[tuple[str, str]] = []

    def fail(constraint: str, msg: str):
        if strict:
            raise ScheduleViolation(msg, constraint=constraint)
        violations.append((constraint, msg))

    if cluster.n_nodes != schedule.n_nodes:
        fail("cluster", f"schedule is for {schedule.n_nodes} nodes, cluster has {cluster.n_nodes}")
    tdma = schedule.tdma
    try:
        TdmaSchedule(schedule.epoch_us, tdma.slots, tdma.guard_us).validate()
    except InfeasibleError as exc:
        fail("tdma", str(exc))

    # radio replay: every slot carries its frames back to back, nothing may overlap or spill
    net = Network(range(schedule.n_nodes), cluster.radio)
    frames_sent = 0
    for slot in tdma.slots:
        bits = schedule.slot_bits.get((slot.flow_id, slot.node_id), 0)
        nbytes = math.ceil(bits / 8)
        ptype = _phase_ptype(schedule, slot.flow_id)
        frames = [npack(bytes(min(MAX_PAYLOAD, nbytes - off)), ptype, slot.node_id, 255, slot.flow_id % 256, k)
                  for k, off in enumerate(range(0, nbytes, MAX_PAYLOAD))]
        try:
            net.transmit(slot, frames)
        except AssertionError as exc:
            fail("tdma", str(exc))
        frames_sent += len(frames)
    busy = sum(s.duration_us for s in tdma.slots)

    # power per phase of the epoch on every node
    peak, avg = {}, {}
    for plan in schedule.nodes:
        n = plan.node
        budget = schedule.budgets_mw[n]
        node = Node(n, cluster.array, cluster.catalog, cluster.periph, cluster.geometry, budget)
        try:
            configure_pipeline(node, plan.fragment, plan.dividers)
        except ConfigurationError as exc:
            fail(f"capacity:node{n}", f"node {n}: {exc}")
            continue
        phases = {"idle": node.power_tally()}
        if tdma.slots:
            phases["intra-radio"] = node.power_tally(radio="intra")
        if plan.external:
            phases["external-radio"] = node.power_tally(radio="external")
        if plan.stimulates:
            phases["stimulation"] = node.power_tally(stimulating=True)
        worst = max(phases, key=lambda k: phases[k]["total"])
        peak[n] = phases[worst]["total"]
        if peak[n] > budget + 1e-9:
            fail(f"power-peak:node{n}", f"node {n} draws {peak[n]:.4f} mW during {worst}, budget {budget} mW")
        radio_mw = phases.get("intra-radio", phases["idle"])["radio"]
        avg[n] = phases["idle"]["total"] + radio_mw * busy / schedule.epoch_us
        if avg[n] > budget + 1e-9:
            fail(f"power-avg:node{n}", f"node {n} averages {avg[n]:.4f} mW over the epoch, budget {budget} mW")

    # response latency of every class that carries channels
    lat = {}
    for c in schedule.classes:
        if c.channels <= 0:
            continue
        lat[c.name] = schedule.predicted_latency_ms(c)
        if lat[c.name] > schedule.deadline_ms + 1e-9:
            fail(f"latency:{c.name}", f"{c.name} responds in {lat[c.name]:.3f} ms, deadline {schedule.deadline_ms} ms")

    return ValidationReport(not violations, peak, avg, lat, busy, frames_sent, violations)
