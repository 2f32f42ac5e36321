"""Flow enumeration: every placement of a task's stages onto nodes.

Flows of one broadcast group (same origin node) carry the same channels,
so they share an ILP variable. On a homogeneous cluster with only relative
placements, groups that are node relabelings of one another are merged
into a single symmetry class.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from graphlib import TopologicalSorter

from ..errors import InfeasibleError
from .taskgraph import Cluster, Task, TaskGraph


@dataclass(frozen=True)
class Flow:
    task: str
    assignment: tuple[tuple[str, int], ...]     # (stage name, node) in stage order
    group: tuple

    def node_of(self, stage: str) -> int:
        for s, n in self.assignment:
            if s == stage:
                return n
        raise KeyError(stage)

    @property
    def shape(self) -> tuple[int, ...]:
        """Node ids relabeled by first appearance; equal for symmetric flows."""
        seen: dict[int, int] = {}
        return tuple(seen.setdefault(n, len(seen)) for _, n in self.assignment)


def _domain(stage, chosen: dict[str, int], n_nodes: int) -> list[int]:
    p = stage.place
    if isinstance(p, str):
        if p == "any":
            return list(range(n_nodes))
        kind, _, ref = p.partition(":")
        if kind == "with":
            return [chosen[ref]]
        if kind == "not":
            return [n for n in range(n_nodes) if n != chosen[ref]]
        raise ValueError(f"unknown placement {p!r}")
    return [int(n) for n in p if 0 <= int(n) < n_nodes]


def enumerate_task_flows(task: Task, n_nodes: int, pin: dict[str, int] | None = None) -> list[Flow]:
    """All placements of ``task``; ``pin`` restricts named stages to one node."""
    out: list[Flow] = []
    stages = task.stages
    pin = pin or {}

    def rec(i: int, chosen: dict[str, int]):
        if i == len(stages):
            assignment = tuple((s.name, chosen[s.name]) for s in stages)
            group = (task.name, chosen[task.group_by]) if task.group_by else (task.name, assignment)
            out.append(Flow(task.name, assignment, group))
            return
        dom = _domain(stages[i], chosen, n_nodes)
        if stages[i].name in pin:
            dom = [n for n in dom if n == pin[stages[i].name]]
        if not dom:
            blocked.append(stages[i].name)
            return
        for n in dom:
            chosen[stages[i].name] = n
            rec(i + 1, chosen)
        chosen.pop(stages[i].name, None)

    blocked: list[str] = []
    rec(0, {})
    if not out:
        stage = blocked[0] if blocked else task.stages[0].name
        raise InfeasibleError(f"task {task.name}: stage {stage} has an empty placement domain",
                              row=f"placement:{task.name}.{stage}")
    return out


def enumerate_flows(graph: TaskGraph, cluster: Cluster) -> list[Flow]:
    graph.check(cluster.catalog)
    flows = []
    for t in graph.tasks:
        flows.extend(enumerate_task_flows(t, cluster.n_nodes))
    if not flows:
        raise InfeasibleError("no flows could be enumerated", row="placement")
    return flows


def symmetric(graph: TaskGraph, cluster: Cluster) -> bool:
    return cluster.homogeneous and not graph.has_absolute_placement()


def origin_stage(task: Task) -> str:
    return task.group_by or task.stages[0].name


@dataclass
class FlowClass:
    """A set of groups forced to carry the same channel count."""
    key: tuple
    task: str
    groups: list[tuple] = field(default_factory=list)
    flows: list[Flow] = field(default_factory=list)

    @property
    def multiplicity(self) -> int:
        return len(self.groups)


def classify(flows: list[Flow], collapse: bool) -> list[FlowClass]:
    by_group: dict[tuple, list[Flow]] = defaultdict(list)
    for f in flows:
        by_group[f.group].append(f)
    classes: dict[tuple, FlowClass] = {}
    for g, members in by_group.items():
        key = (members[0].task, members[0].shape) if collapse else g
        fc = classes.setdefault(key, FlowClass(key, members[0].task))
        fc.groups.append(g)
        fc.flows.extend(members)
    return list(classes.values())


def critical_latency(task: Task, catalog) -> float:
    """Longest path of fixed PE latencies through the task's critical stages."""
    lat = {}
    for s in task.stages:
        spec = catalog[s.pe]
        lat[s.name] = spec.latency if s.critical else 0.0
    preds = defaultdict(list)
    ts = TopologicalSorter({s.name: set() for s in task.stages})
    for e in task.edges:
        preds[e.dst].append(e.src)
        ts.add(e.dst, e.src)
    best = {}
    for name in ts.static_order():
        best[name] = lat[name] + max((best[p] for p in preds[name]), default=0.0)
    return max(best.values(), default=0.0)
