"""A single simulated implant: PE fabric wiring, peripherals, storage, power tally.

Power in this module is reported in mW; PE catalog values (µW) are
converted at the boundary.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping

from .errors import ConfigurationError
from .pe import Catalog, ClockDivider, PeriphSpec, default_catalog, min_frequency_divider, pe_power
from .signal import ArrayConfig
from .storage import NvmGeometry, StorageController

DEFAULT_BUDGET_MW = 15.0


@dataclass(frozen=True)
class McuSpec:
    """Microcontroller treated as a latency/power black box."""
    freq_mhz: float = 20.0
    memory_bytes: int = 8 * 1024
    active_mw: float = 0.5
    cycles_per_emd_bin: int = 12
    cycles_per_sync_round: int = 4000

    def cycles_to_ms(self, cycles: float) -> float:
        return cycles / (self.freq_mhz * 1e3)

    def emd_ms(self, length: int) -> float:
        return self.cycles_to_ms(self.cycles_per_emd_bin * length)


@dataclass
class Fragment:
    """A dataflow fragment to wire on one node: PE edges plus per-PE channel
    loads tagged by flow (several flows may share a PE, interleaved).

    ``rates`` gives, per PE and tag, the stream rate of one channel relative
    to a raw electrode stream (hash streams are much thinner); capacity is
    checked on ``channels * rate``.
    """
    edges: list[tuple[str, str]] = field(default_factory=list)
    loads: dict[str, dict[str, int]] = field(default_factory=dict)
    isolated: set[str] = field(default_factory=set)
    rates: dict[str, dict[str, float]] = field(default_factory=dict)
    scales: dict[str, dict[str, float]] = field(default_factory=dict)

    @classmethod
    def linear(cls, stages: Iterable[str], channels: int = 0, tag: str = "flow") -> "Fragment":
        st = [s.upper() for s in stages]
        return cls(edges=list(zip(st, st[1:])), loads={s: {tag: channels} for s in st},
                   isolated=set(st) if len(st) == 1 else set())

    @classmethod
    def fan_in(cls, sources: Iterable[str], sink: str, channels: int = 0, tag: str = "flow") -> "Fragment":
        src = [s.upper() for s in sources]
        sink = sink.upper()
        return cls(edges=[(s, sink) for s in src], loads={s: {tag: channels} for s in src + [sink]})

    def add_load(self, pe: str, tag: str, channels: int, rate: float = 1.0, dyn_scale: float = 1.0) -> None:
        pe = pe.upper()
        slot = self.loads.setdefault(pe, {})
        slot[tag] = slot.get(tag, 0) + channels
        if rate != 1.0:
            self.rates.setdefault(pe, {})[tag] = rate
        if dyn_scale != 1.0:
            self.scales.setdefault(pe, {})[tag] = dyn_scale

    def merge(self, other: "Fragment") -> "Fragment":
        out = Fragment(list(dict.fromkeys(self.edges + other.edges)), {}, self.isolated | other.isolated)
        for frag in (self, other):
            for pe, tags in frag.loads.items():
                for tag, ch in tags.items():
                    out.add_load(pe, tag, ch, frag.rate(pe, tag), frag.scale(pe, tag))
        return out

    def rate(self, pe: str, tag: str) -> float:
        return self.rates.get(pe.upper(), {}).get(tag, 1.0)

    def scale(self, pe: str, tag: str) -> float:
        return self.scales.get(pe.upper(), {}).get(tag, 1.0)

    def dyn_load(self, pe: str) -> float:
        """Channels weighted by the share of per-channel dynamic power they draw."""
        pe = pe.upper()
        return sum(ch * self.scale(pe, tag) for tag, ch in self.loads.get(pe, {}).items())

    def effective_load(self, pe: str) -> float:
        pe = pe.upper()
        return sum(ch * self.rate(pe, tag) for tag, ch in self.loads.get(pe, {}).items())

    def pes(self) -> set[str]:
        names = set(self.loads) | self.isolated
        for a, b in self.edges:
            names.update((a, b))
        return names


@dataclass
class PeInstance:
    name: str
    divider: ClockDivider
    channels: dict[str, int]
    load: float = 0.0            # rate-weighted channels, what capacity is checked against
    dyn_channels: float | None = None

    @property
    def charged_channels(self) -> float:
        return self.total_channels if self.dyn_channels is None else self.dyn_channels

    @property
    def total_channels(self) -> int:
        return sum(self.channels.values())


@dataclass
class PipelineGraph:
    nodes: dict[str, PeInstance] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def order(self) -> list[str]:
        ts = TopologicalSorter({n: set() for n in self.nodes})
        for a, b in self.edges:
            ts.add(b, a)
        return list(ts.static_order())

    def dynamic_uw(self, catalog: Catalog) -> float:
        """Dynamic draw charged at the per-channel figure of every carried channel.

        This is the full-clock figure; dividing the clock is treated as a
        capacity quantization, so the tally never undercuts the ILP rows.
        """
        return sum(catalog[n].dyn_per_electrode * inst.charged_channels for n, inst in self.nodes.items())

    def clock_scaled_uw(self, catalog: Catalog) -> float:
        """Dynamic draw under the ``dyn * channels / k`` clock-scaling formula."""
        return sum(pe_power(catalog[n], min(inst.total_channels, catalog[n].capacity_k1 // inst.divider.k),
                            inst.divider) - catalog[n].leakage for n, inst in self.nodes.items())


def configure_pipeline(node: "Node", fragment: Fragment | None, dividers: Mapping[str, int] | None = None) -> PipelineGraph:
    """Wire ``fragment`` on ``node`` choosing the slowest clock that sustains each PE's load."""
    if fragment is None or not fragment.pes():
        node.pipeline = PipelineGraph()
        return node.pipeline
    node.catalog.require(fragment.pes())
    graph = PipelineGraph(edges=[(a.upper(), b.upper()) for a, b in fragment.edges])
    for name in sorted(fragment.pes()):
        key = name.upper()
        load = dict(fragment.loads.get(key, {}))
        eff = fragment.effective_load(key)
        spec = node.catalog[key]
        if eff > spec.capacity_k1 + 1e-9:
            raise ConfigurationError(f"{key}: load of {eff:g} channels exceeds capacity {spec.capacity_k1}")
        if dividers and key in dividers:
            div = ClockDivider(int(dividers[key]))
            if eff > spec.capacity_k1 // div.k + 1e-9:
                raise ConfigurationError(f"{key}: divider k={div.k} cannot sustain {eff:g} channels")
        else:
            div = min_frequency_divider(spec, math.ceil(eff - 1e-9))
        graph.nodes[key] = PeInstance(key, div, load, eff, fragment.dyn_load(key))
    try:
        graph.order()
    except CycleError as exc:
        raise ConfigurationError(f"pipeline has a cycle: {exc.args[1]}") from None
    node.pipeline = graph
    node.log("configure", pes=sorted(graph.nodes))
    return graph


@dataclass
class StimEvent:
    start_us: float
    end_us: float
    pattern: str = "default"

    @property
    def duration_us(self) -> float:
        return self.end_us - self.start_us


@dataclass
class RadioSpecLite:
    intra_mw: float = 1.721
    external_mw: float = 9.2


class Node:
    def __init__(self, node_id: int, array: ArrayConfig = ArrayConfig(), catalog: Catalog | None = None,
                 periph: PeriphSpec = PeriphSpec(), geometry: NvmGeometry | None = None,
                 budget_mw: float = DEFAULT_BUDGET_MW, chunk_samples: int = 120, hash_chunk_items: int = 3,
                 mcu: McuSpec = McuSpec(), radio_mw: RadioSpecLite = RadioSpecLite(), fabricated: Iterable[str] | None = None):
        self.node_id = node_id
        self.array = array
        self.catalog = catalog or default_catalog()
        self.periph = periph
        self.budget_mw = budget_mw
        self.mcu = mcu
        self.radio_mw = radio_mw
        self.fabricated = list(self.catalog.names() if fabricated is None else fabricated)
        self.geometry = geometry or NvmGeometry()
        self._storage = None
        self._storage_args = (array.electrodes, chunk_samples, hash_chunk_items)
        self.pipeline = PipelineGraph()
        self.clock_offset_us = 0.0
        self.events: list[dict] = []
        self.stims: list[StimEvent] = []
        self.energy_uj: dict[str, float] = defaultdict(float)
        self.radio_paused = False

    @property
    def storage(self) -> StorageController:
        if self._storage is None:
            e, c, h = self._storage_args
            self._storage = StorageController(self.geometry, e, c, h)
        return self._storage

    # ------------------------------------------------------------------ power
    def static_mw(self) -> dict[str, float]:
        """Always-on draw: every fabricated PE leaks, ADC samples the array, NVM leaks."""
        return {
            "pe_leakage": self.catalog.total_leakage(self.fabricated) / 1000.0,
            "adc": self.periph.adc_power(self.array.electrodes),
            "nvm_leakage": self.geometry.leakage_mw,
        }

    def power_tally(self, *, radio: str | None = None, stimulating: bool = False, nvm_active: bool = True,
                    mcu_active: bool = False) -> dict[str, float]:
        """Per-component draw (mW) for one instant of the current configuration."""
        t = self.static_mw()
        t["pe_dynamic"] = self.pipeline.dynamic_uw(self.catalog) / 1000.0
        t["nvm_active"] = self.geometry.program_power_mw if nvm_active else 0.0
        t["radio"] = {None: 0.0, "intra": self.radio_mw.intra_mw, "external": self.radio_mw.external_mw}[radio]
        t["dac"] = self.periph.dac_stim_power if stimulating else 0.0
        t["mcu"] = self.mcu.active_mw if mcu_active else 0.0
        t["total"] = sum(t.values())
        return t

    def within_budget(self, **kw) -> bool:
        return self.power_tally(**kw)["total"] <= self.budget_mw + 1e-9

    # ------------------------------------------------------------------ stimulation
    def stimulate(self, start_us: float, duration_us: float, pattern: str = "default") -> StimEvent:
        """Drive the DAC; overlapping requests merge into one event (single DAC)."""
        if duration_us <= 0:
            raise ValueError("stimulation pattern needs a positive duration")
        new = StimEvent(start_us, start_us + duration_us, pattern)
        keep = []
        for ev in self.stims:
            if ev.start_us <= new.end_us and new.start_us <= ev.end_us:
                new = StimEvent(min(ev.start_us, new.start_us), max(ev.end_us, new.end_us), ev.pattern)
            else:
                keep.append(ev)
        keep.append(new)
        keep.sort(key=lambda e: e.start_us)
        self.stims = keep
        self.log("stimulate", t_us=new.start_us, duration_us=new.duration_us, pattern=new.pattern)
        return new

    def dac_energy_uj(self) -> float:
        return sum(ev.duration_us for ev in self.stims) * 1e-3 * self.periph.dac_stim_power

    def charge(self, component: str, energy_uj: float) -> None:
        self.energy_uj[component] += energy_uj

    # ------------------------------------------------------------------ logging
    def local_time(self, true_us: float) -> float:
        return true_us + self.clock_offset_us

    def log(self, kind: str, **fields) -> None:
        rec = {"node": self.node_id, "event": kind}
        rec.update(fields)
        self.events.append(rec)

    def write_event_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.events:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def __repr__(self):
        return f"Node({self.node_id}, pes={sorted(self.pipeline.nodes)})"
