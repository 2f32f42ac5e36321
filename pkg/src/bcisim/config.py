"""Deployment configuration documents and experiment specs.

A configuration is one YAML document with the sections ``cluster``,
``nodes``, ``pe_catalog``, ``radios``, ``hash_presets`` and
``applications``; anything left out takes the packaged default. Names
that are not paths are looked up in ``$BCISIM_CONFIG_DIR`` first, then
among the packaged documents.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigurationError
from .lsh import SketchParams
from .network import BerModel, RadioSpec
from .pe import Catalog, load_catalog
from .scheduler import Cluster
from .signal import ArrayConfig

ENV_CONFIG_DIR = "BCISIM_CONFIG_DIR"
SCENARIOS = ("seizure-propagation", "movement-intent", "spike-sort", "query-bench", "throughput-sweep",
             "ber-sweep", "ilp-bench")


def _packaged(name: str) -> str:
    return resources.files("bcisim").joinpath("data").joinpath(name).read_text()


def _deep_merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_path(ref: str | os.PathLike, suffixes=(".yaml", ".yml")) -> Path | None:
    """A config reference as a file: the path itself, or ``<name><suffix>`` in the config directory."""
    p = Path(ref)
    if p.is_file():
        return p
    d = os.environ.get(ENV_CONFIG_DIR)
    if d:
        for cand in [Path(d) / p] + [Path(d) / f"{p}{s}" for s in suffixes]:
            if cand.is_file():
                return cand
    return None


@dataclass
class ClusterConfig:
    doc: dict
    source: str = "default"

    @classmethod
    def default(cls) -> "ClusterConfig":
        return cls(yaml.safe_load(_packaged("default.yaml")), "default")

    @classmethod
    def from_dict(cls, doc: Mapping, source: str = "<dict>") -> "ClusterConfig":
        unknown = set(doc) - {"cluster", "nodes", "pe_catalog", "radios", "hash_presets", "applications"}
        if unknown:
            raise ConfigurationError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        cfg = cls(_deep_merge(cls.default().doc, doc), source)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, ref: str | os.PathLike | None = None) -> "ClusterConfig":
        if ref is None or str(ref) == "default":
            return cls.default()
        path = resolve_path(ref)
        if path is None:
            raise ConfigurationError(f"config {ref!r} not found (searched the path and ${ENV_CONFIG_DIR})")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        return cls.from_dict(doc, str(path))

    def check(self) -> None:
        c = self.doc["cluster"]
        if int(c["nodes"]) < 1:
            raise ConfigurationError("cluster.nodes must be >= 1")
        for row in self.doc.get("nodes") or []:
            if not 0 <= int(row.get("id", -1)) < int(c["nodes"]):
                raise ConfigurationError(f"node override {row} names a node outside the cluster")
        if any(b <= 0 for b in self.budgets()):
            raise ConfigurationError("power budgets must be positive")
        if not 0.0 <= float(self.doc["radios"].get("ber", 0.0)) < 1.0:
            raise ConfigurationError("radios.ber must lie in [0, 1)")
        self.catalog()
        self.presets()

    # -- views
    @property
    def n_nodes(self) -> int:
        return int(self.doc["cluster"]["nodes"])

    @property
    def seed(self) -> int:
        return int(self.doc["cluster"].get("seed", 0))

    def budgets(self) -> list[float]:
        b = [float(self.doc["cluster"]["budget_mw"])] * self.n_nodes
        for row in self.doc.get("nodes") or []:
            if "budget_mw" in row:
                b[int(row["id"])] = float(row["budget_mw"])
        return b

    def catalog(self) -> Catalog:
        return load_catalog(self.doc.get("pe_catalog") or {})

    def array(self) -> ArrayConfig:
        c = self.doc["cluster"]
        return ArrayConfig(electrodes=int(c["electrodes"]), sample_rate=float(c["sample_rate_hz"]))

    def radio(self, which: str = "intra") -> RadioSpec:
        r = self.doc["radios"][which]
        return RadioSpec(float(r["rate_bps"]), float(r["active_mw"]), float(r.get("guard_us", 10.0)))

    def ber(self, seed: int | None = None) -> BerModel:
        return BerModel(float(self.doc["radios"].get("ber", 0.0)), seed=self.seed if seed is None else seed)

    def presets(self) -> dict[str, tuple[int, int, int]]:
        out = {}
        for name, triple in (self.doc.get("hash_presets") or {}).items():
            w, s, n = (int(v) for v in triple)
            SketchParams(w, s, n)            # validates
            out[name.upper()] = (w, s, n)
        return out

    def app(self, name: str) -> dict:
        return dict(self.doc["applications"].get(name) or {})

    def cluster(self, n_nodes: int | None = None, budgets: list[float] | None = None) -> Cluster:
        n = n_nodes or self.n_nodes
        b = budgets or (self.budgets() if n == self.n_nodes else [float(self.doc["cluster"]["budget_mw"])] * n)
        return Cluster(n, b, catalog=self.catalog(), radio=self.radio("intra"), external=self.radio("external"),
                       epoch_ms=float(self.doc["cluster"]["epoch_ms"]), array=self.array())

    def dump(self) -> str:
        return yaml.safe_dump(self.doc, sort_keys=False)


@dataclass
class ExperimentSpec:
    scenario: str
    config: ClusterConfig
    sweep: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str = "results"
    options: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: Path | None = None) -> "ExperimentSpec":
        scenario = doc.get("scenario")
        if scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}")
        ref = doc.get("cluster", "default")
        if isinstance(ref, Mapping):
            cfg = ClusterConfig.from_dict(ref)
        else:
            path = None if ref == "default" else resolve_path(ref) or (
                resolve_path(base_dir / ref) if base_dir is not None else None)
            if ref != "default" and path is None:
                raise ConfigurationError(f"cluster config {ref!r} referenced by the spec does not exist")
            cfg = ClusterConfig.load(path) if path else ClusterConfig.default()
        sweep = {k: list(v) if isinstance(v, (list, tuple)) else [v] for k, v in (doc.get("sweep") or {}).items()}
        seeds = doc.get("seeds", [cfg.seed])
        seeds = [int(s) for s in (seeds if isinstance(seeds, (list, tuple)) else [seeds])]
        return cls(scenario, cfg, sweep, seeds, str(doc.get("output", "results")), dict(doc.get("options") or {}))

    @classmethod
    def load(cls, ref: str | os.PathLike) -> "ExperimentSpec":
        path = resolve_path(ref)
        if path is None:
            raise ConfigurationError(f"experiment spec {ref!r} not found")
        try:
            doc = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        return cls.from_dict(doc, path.parent)
