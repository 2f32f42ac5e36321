"""Declarative task graphs and the cluster description the ILP is built against."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import yaml

from ..errors import ConfigurationError
from ..network import EXTERNAL, INTRA, RadioSpec
from ..pe import Catalog, PeriphSpec, default_catalog
from ..signal import ArrayConfig
from ..storage import NvmGeometry


@dataclass(frozen=True)
class Stage:
    """One PE function placed on some node.

    ``place`` is ``"any"``, an explicit list of node ids, ``"with:<stage>"``
    (same node as an earlier stage) or ``"not:<stage>"`` (any other node).
    ``rate`` is the stream rate relative to a raw electrode stream, used
    for PE capacity. ``critical`` stages count toward response latency;
    background streaming stages do not. ``shared`` stages belong to the
    origin of a broadcast group and are paid once per group.
    ``reply_bits`` is what the stage sends back to its group's origin per
    channel each epoch, in a reply slot of its own node. ``dyn_scale``
    is the share of the PE's per-channel dynamic power the stage draws per
    channel (0 for a stage that only combines a few per-node scalars).
    """
    name: str
    pe: str
    place: object = "any"
    critical: bool = True
    rate: float = 1.0
    shared: bool = False
    external: bool = False
    stimulates: bool = False
    reply_bits: float = 0.0
    dyn_scale: float = 1.0


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    bits_per_channel: float = 0.0
    bits_fixed: float = 0.0
    broadcast: bool = False


@dataclass
class Task:
    name: str
    weight: float
    stages: list[Stage]
    edges: list[Edge] = field(default_factory=list)
    group_by: str | None = None
    after: str | None = None        # task whose response must complete before this one starts

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise ConfigurationError(f"task {self.name}: no stage {name!r}")


@dataclass
class TaskGraph:
    name: str
    tasks: list[Task]
    deadline_ms: float = 10.0
    budget_mw: float = 15.0

    def pe_names(self) -> set[str]:
        return {s.pe.upper() for t in self.tasks for s in t.stages}

    def task(self, name: str) -> Task:
        for t in self.tasks:
            if t.name == name:
                return t
        raise ConfigurationError(f"no task {name!r}")

    def check(self, catalog: Catalog) -> None:
        catalog.require(self.pe_names())
        task_names = [t.name for t in self.tasks]
        if len(set(task_names)) != len(task_names):
            raise ConfigurationError("duplicate task names")
        for i, t in enumerate(self.tasks):
            if t.after is not None and t.after not in task_names[:i]:
                raise ConfigurationError(f"task {t.name}: 'after' must name an earlier task")
            if t.group_by is not None and t.group_by not in {s.name for s in t.stages}:
                raise ConfigurationError(f"task {t.name}: group_by names an unknown stage")
            if t.weight <= 0:
                raise ConfigurationError(f"task {t.name}: weight must be positive")
            names = [s.name for s in t.stages]
            if len(set(names)) != len(names):
                raise ConfigurationError(f"task {t.name}: duplicate stage names")
            seen = set()
            for s in t.stages:
                if isinstance(s.place, str) and ":" in s.place:
                    ref = s.place.split(":", 1)[1]
                    if ref not in seen:
                        raise ConfigurationError(f"task {t.name}: stage {s.name} refers to later/unknown stage {ref}")
                seen.add(s.name)
            for e in t.edges:
                if e.src not in names or e.dst not in names:
                    raise ConfigurationError(f"task {t.name}: edge {e.src}->{e.dst} names an unknown stage")
            _check_acyclic(t)

    def has_absolute_placement(self) -> bool:
        return any(not isinstance(s.place, str) for t in self.tasks for s in t.stages)

    # ------------------------------------------------------------------ text form
    def to_dict(self) -> dict:
        return {
            "name": self.name, "deadline_ms": self.deadline_ms, "budget_mw": self.budget_mw,
            "tasks": [{
                "name": t.name, "weight": t.weight, "group_by": t.group_by, "after": t.after,
                "stages": [_drop_defaults(s.__dict__, Stage("", "")) for s in t.stages],
                "edges": [_drop_defaults(e.__dict__, Edge("", "")) for e in t.edges],
            } for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskGraph":
        try:
            tasks = [Task(name=t["name"], weight=float(t.get("weight", 1.0)),
                          stages=[Stage(**s) for s in t["stages"]],
                          edges=[Edge(**e) for e in t.get("edges", [])],
                          group_by=t.get("group_by"), after=t.get("after"))
                     for t in d["tasks"]]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed task graph: {exc}") from None
        return cls(d.get("name", "graph"), tasks, float(d.get("deadline_ms", 10.0)), float(d.get("budget_mw", 15.0)))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def load(cls, text_or_path) -> "TaskGraph":
        text = text_or_path
        if not isinstance(text, str) or "\n" not in text:
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_dict(yaml.safe_load(text))


def _drop_defaults(d: dict, proto) -> dict:
    return {k: v for k, v in d.items() if k in ("name", "pe", "src", "dst") or v != getattr(proto, k)}


def _check_acyclic(task: Task) -> None:
    from graphlib import CycleError, TopologicalSorter
    ts = TopologicalSorter({s.name: set() for s in task.stages})
    for e in task.edges:
        ts.add(e.dst, e.src)
    try:
        list(ts.static_order())
    except CycleError:
        raise ConfigurationError(f"task {task.name}: stage graph has a cycle") from None


@dataclass
class Cluster:
    """Node population and the shared hardware parameters.

    Static power of a node (mW) is what every configuration pays: leakage
    of every fabricated PE, the ADC, NVM leakage, and NVM program power
    (charged as always-on because chunk writes stream continuously).
    """
    n_nodes: int
    budgets_mw: Sequence[float] | None = None
    catalog: Catalog = field(default_factory=default_catalog)
    radio: RadioSpec = INTRA
    external: RadioSpec = EXTERNAL
    epoch_ms: float = 10.0
    array: ArrayConfig = field(default_factory=ArrayConfig)
    periph: PeriphSpec = field(default_factory=PeriphSpec)
    geometry: NvmGeometry = field(default_factory=NvmGeometry)
    framing: bool = True
    max_payload: int = 256

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigurationError("cluster needs at least one node")
        if self.budgets_mw is None:
            self.budgets_mw = [15.0] * self.n_nodes
        self.budgets_mw = [float(b) for b in self.budgets_mw]
        if len(self.budgets_mw) != self.n_nodes:
            raise ConfigurationError("one budget per node is required")

    @property
    def homogeneous(self) -> bool:
        return len(set(self.budgets_mw)) == 1

    @property
    def epoch_us(self) -> float:
        return self.epoch_ms * 1000.0

    def static_mw(self) -> float:
        return (self.catalog.total_leakage() / 1000.0 + self.periph.adc_power(self.array.electrodes)
                + self.geometry.leakage_mw + self.geometry.program_power_mw)

    def frame_overhead(self) -> tuple[float, float]:
        """(bits added per payload bit, bits added per slot) for frame headers and CRCs."""
        if not self.framing:
            return 0.0, 0.0
        from ..packet import OVERHEAD_BITS
        # the per-slot share also covers rounding the payload up to whole bytes
        return OVERHEAD_BITS / (8 * self.max_payload), float(OVERHEAD_BITS + 7)

    def with_nodes(self, n: int, budget: float | None = None) -> "Cluster":
        b = self.budgets_mw[0] if budget is None else budget
        return Cluster(n, [b] * n, self.catalog, self.radio, self.external, self.epoch_ms, self.array,
                       self.periph, self.geometry, self.framing, self.max_payload)
