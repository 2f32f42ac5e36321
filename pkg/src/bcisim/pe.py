"""Processing-element catalog with linear power and fixed-latency models.

Units throughout: frequency in MHz, power in µW, latency in ms. Dynamic
power is quoted per electrode at ``f_max``; running a PE at ``f_max / k``
divides both its dynamic power per channel and its channel capacity by
``k``. Latency per window does not depend on how many channels a PE
carries.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import CapacityError, ConfigurationError

DEFAULT_CAPACITY = 96

# name: (f_max MHz, leakage µW, dyn µW per electrode, latency ms or (min, max))
TABLE = {
    "FFT": (15.7, 141.97, 9.02, 4.00),
    "XCOR": (85.0, 377.00, 44.11, 4.00),
    "BBF": (6.0, 66.00, 0.35, 4.00),
    "SVM": (3.0, 99.00, 0.53, 1.67),
    "THR": (16.0, 2.00, 0.11, 0.06),
    "NEO": (3.0, 12.00, 0.03, 4.00),
    "HCONV": (3.0, 89.89, 0.80, 1.50),
    "NGRAM": (0.2, 15.69, 0.08, 1.50),
    "EMDH": (0.03, 10.47, 0.00, 0.04),
    "GATE": (5.0, 67.00, 0.63, 0.00),
    "HFREQ": (2.88, 61.98, 0.52, 4.00),
    "HCOMP": (2.88, 77.00, 0.65, 4.00),
    "NPACK": (3.0, 3.53, 5.49, 0.008),
    "UNPACK": (3.0, 3.53, 5.49, 0.008),
    "DCOMP": (16.393, 7.20, 0.14, 0.50),
    "CCHECK": (16.393, 7.20, 0.14, 0.50),
    "CSEL": (0.1, 4.00, 6.00, 0.04),
    "SC": (3.2, 95.30, 1.64, (0.03, 4.0)),
    "DTW": (50.0, 167.93, 26.94, 0.003),
}


@dataclass(frozen=True)
class PeSpec:
    name: str
    f_max: float
    leakage: float
    dyn_per_electrode: float
    latency: float
    latency_max: float | None = None
    capacity_k1: int = DEFAULT_CAPACITY

    def __post_init__(self):
        for attr in ("f_max", "leakage", "dyn_per_electrode", "latency"):
            if getattr(self, attr) < 0:
                raise ConfigurationError(f"{self.name}: {attr} must be >= 0")
        if self.latency_max is not None and self.latency_max < self.latency:
            raise ConfigurationError(f"{self.name}: latency range is inverted")
        if self.capacity_k1 < 0:
            raise ConfigurationError(f"{self.name}: capacity must be >= 0")

    @property
    def latency_range(self) -> tuple[float, float]:
        return (self.latency, self.latency if self.latency_max is None else self.latency_max)


@dataclass(frozen=True)
class ClockDivider:
    k: int = 1

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"clock divider must be a positive integer, got {self.k}")

    def frequency(self, spec: PeSpec) -> float:
        return spec.f_max / self.k


@dataclass(frozen=True)
class PeriphSpec:
    adc_power_full: float = 2.88      # mW for all electrodes of a full array
    adc_full_electrodes: int = 96
    dac_stim_power: float = 0.6       # mW while stimulating
    sample_rate: float = 30000.0
    sample_bits: int = 16

    def adc_power(self, electrodes: int) -> float:
        """ADC power in mW, linear in the number of sampled electrodes."""
        return self.adc_power_full * electrodes / self.adc_full_electrodes


def pe_capacity(spec: PeSpec, divider: ClockDivider = ClockDivider()) -> int:
    return spec.capacity_k1 // divider.k


def pe_power(spec: PeSpec, channels: int, divider: ClockDivider = ClockDivider()) -> float:
    """Leakage plus dynamic power in µW for ``channels`` electrodes at ``f_max / k``."""
    if channels < 0:
        raise ValueError("channels must be >= 0")
    cap = pe_capacity(spec, divider)
    if channels > cap:
        raise CapacityError(f"{spec.name}: {channels} channels exceed capacity {cap} at k={divider.k}")
    return spec.leakage + spec.dyn_per_electrode * channels / divider.k


def min_frequency_divider(spec: PeSpec, channels: int) -> ClockDivider:
    """Largest divider (lowest clock) that still sustains ``channels``."""
    if channels > spec.capacity_k1:
        raise CapacityError(f"{spec.name}: {channels} channels exceed capacity {spec.capacity_k1}")
    if channels <= 0:
        return ClockDivider(max(1, spec.capacity_k1))
    return ClockDivider(max(1, spec.capacity_k1 // channels))


@dataclass(frozen=True)
class Catalog:
    specs: Mapping[str, PeSpec] = field(default_factory=dict)

    def __getitem__(self, name: str) -> PeSpec:
        try:
            return self.specs[name.upper()]
        except KeyError:
            raise ConfigurationError(f"unknown PE {name!r}") from None

    def __contains__(self, name) -> bool:
        return isinstance(name, str) and name.upper() in self.specs

    def __iter__(self):
        return iter(self.specs.values())

    def __len__(self):
        return len(self.specs)

    def names(self) -> list[str]:
        return list(self.specs)

    def require(self, names: Iterable[str]) -> None:
        missing = sorted({n for n in names if n not in self})
        if missing:
            raise ConfigurationError(f"unknown PE name(s): {', '.join(missing)}")

    def total_leakage(self, names: Iterable[str] | None = None) -> float:
        """Sum of leakage (µW) over ``names`` (default: every PE in the catalog)."""
        pool = self.specs.values() if names is None else (self[n] for n in names)
        return sum(s.leakage for s in pool)

    def with_overrides(self, overrides: Mapping[str, Mapping]) -> "Catalog":
        specs = dict(self.specs)
        for name, row in overrides.items():
            key = name.upper()
            base = specs.get(key)
            if base is None:
                specs[key] = _spec_from_row(key, row)
            else:
                specs[key] = replace(base, **_row_kwargs(row))
        return Catalog(specs)


def _row_kwargs(row: Mapping) -> dict:
    kw = {}
    for src, dst in (("f_max", "f_max"), ("f_max_mhz", "f_max"), ("leakage", "leakage"),
                     ("leakage_uw", "leakage"), ("dyn_per_electrode", "dyn_per_electrode"),
                     ("dyn_uw_per_electrode", "dyn_per_electrode"), ("capacity", "capacity_k1"),
                     ("capacity_k1", "capacity_k1")):
        if src in row:
            kw[dst] = row[src]
    lat = row.get("latency", row.get("latency_ms"))
    if lat is not None:
        if isinstance(lat, (list, tuple)):
            kw["latency"], kw["latency_max"] = float(lat[0]), float(lat[1])
        else:
            kw["latency"], kw["latency_max"] = float(lat), None
    return kw


def _spec_from_row(name: str, row: Mapping) -> PeSpec:
    kw = _row_kwargs(row)
    try:
        return PeSpec(name=name, **kw)
    except TypeError as exc:
        raise ConfigurationError(f"incomplete PE row for {name}: {exc}") from None


def default_catalog() -> Catalog:
    specs = {}
    for name, (f, leak, dyn, lat) in TABLE.items():
        lo, hi = (lat if isinstance(lat, tuple) else (lat, None))
        specs[name] = PeSpec(name, f, leak, dyn, lo, hi)
    return Catalog(specs)


def load_catalog(config: Mapping | None = None, pipelines: Iterable[Iterable[str]] = ()) -> Catalog:
    """Default catalog, with per-PE overrides from ``config`` (a mapping of
    name to partial row), checked against the PE names used by ``pipelines``.
    """
    cat = default_catalog()
    if config:
        cat = cat.with_overrides(config)
    for stages in pipelines:
        cat.require(stages)
    return cat
