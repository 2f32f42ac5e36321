"""Signal chunks, windowing, synthetic generators and raw-file ingestion.

Raw files are headerless, electrode-interleaved little-endian int16 frames
with a plain-text sidecar (``<file>.meta``) holding ``key=value`` lines for
``electrodes``, ``sample_rate_hz`` and ``sample_bits``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, IngestionError

INT16_MIN = -32768
INT16_MAX = 32767


@dataclass(frozen=True)
class ArrayConfig:
    electrodes: int = 96
    sample_rate: float = 30000.0
    sample_bits: int = 16

    def __post_init__(self):
        if self.electrodes < 1:
            raise ConfigurationError("electrodes must be >= 1")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        if self.sample_bits != 16:
            raise ConfigurationError("only 16-bit samples are supported")

    @property
    def channel_bps(self) -> float:
        """Bit rate of a single electrode stream."""
        return self.sample_rate * self.sample_bits

    @property
    def stream_bps(self) -> float:
        return self.channel_bps * self.electrodes

    def ms_to_samples(self, ms: float) -> int:
        return int(round(ms * self.sample_rate / 1000.0))


@dataclass(frozen=True)
class WindowSpec:
    length: int = 120
    step: int = 120

    def __post_init__(self):
        if not 1 <= self.step <= self.length:
            raise ConfigurationError(f"window step must satisfy 1 <= step <= length, got {self.step}/{self.length}")


@dataclass
class SignalChunk:
    electrode_id: int
    start_sample: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        if samples.dtype != np.int16:
            if np.any(samples < INT16_MIN) or np.any(samples > INT16_MAX):
                raise ValueError("sample values must fit in 16 bits")
            samples = samples.astype(np.int16)
        if self.start_sample < 0:
            raise ValueError("start_sample must be >= 0")
        self.samples = samples

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, SignalChunk):
            return NotImplemented
        return (self.electrode_id == other.electrode_id
                and self.start_sample == other.start_sample
                and np.array_equal(self.samples, other.samples))


class Window(NamedTuple):
    start: int
    samples: np.ndarray


def windows(signal, spec: WindowSpec = WindowSpec()) -> list[Window]:
    """Slide ``spec`` over ``signal`` (a SignalChunk or a plain array).

    Starts are relative to the chunk. A signal shorter than the window
    yields an empty list.
    """
    x = signal.samples if isinstance(signal, SignalChunk) else np.asarray(signal)
    n = x.size
    if n < spec.length:
        return []
    return [Window(s, x[s:s + spec.length]) for s in range(0, n - spec.length + 1, spec.step)]


def window_count(n: int, spec: WindowSpec) -> int:
    return 0 if n < spec.length else (n - spec.length) // spec.step + 1


# --------------------------------------------------------------------------
# synthetic data

SYNTH_KINDS = ("sine", "spike-train", "seizure-burst", "noise")
_KIND_CODE = {k: i for i, k in enumerate(SYNTH_KINDS)}


class SpikeEvent(NamedTuple):
    electrode_id: int
    position: int
    template: int
    scale: float


class BurstEvent(NamedTuple):
    electrode_id: int
    start: int
    length: int


@dataclass
class SyntheticSet:
    kind: str
    chunks: list[SignalChunk]
    spikes: list[SpikeEvent] = field(default_factory=list)
    bursts: list[BurstEvent] = field(default_factory=list)
    templates: np.ndarray | None = None


def spike_templates(n_templates: int = 3, length: int = 48, seed: int = 0) -> np.ndarray:
    """Deterministic biphasic extracellular spike shapes, one per row (float64)."""
    rng = np.random.default_rng([seed, 0x5EED])
    t = np.arange(length, dtype=np.float64)
    out = np.empty((n_templates, length))
    for i in range(n_templates):
        # spread the shapes so that distinct neurons are clearly distinguishable
        trough = length * (0.30 + 0.15 * i / max(1, n_templates - 1))
        w1 = 1.5 + 1.5 * i + rng.uniform(0, 0.3)
        w2 = 3.0 + 2.5 * i + rng.uniform(0, 0.5)
        a1 = 3000 + 1500 * i
        a2 = (0.6 - 0.15 * i) * a1
        shape = -a1 * np.exp(-0.5 * ((t - trough) / w1) ** 2) + a2 * np.exp(-0.5 * ((t - trough - 2.5 * w2) / w2) ** 2)
        out[i] = shape
    return out


def _clip16(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(x), INT16_MIN, INT16_MAX).astype(np.int16)


def synth_generate(kind: str, seed: int, config: ArrayConfig = ArrayConfig(), duration: int = 3000,
                   *, noise_std: float = 200.0, spike_rate_hz: float = 40.0, n_templates: int = 3,
                   burst_start: int | None = None, burst_length: int | None = None,
                   burst_electrodes=None, burst_amplitude: float = 6000.0,
                   burst_freq_hz: float = 400.0) -> SyntheticSet:
    """Generate a deterministic per-electrode dataset.

    ``seizure-burst`` injects one rhythmic high-amplitude segment (optionally
    restricted to ``burst_electrodes``); the same underlying waveform is used
    on every burst electrode so that cross-site propagation can be detected.
    ``spike-train`` embeds scaled templates and records their positions.
    """
    if kind not in _KIND_CODE:
        raise ConfigurationError(f"unknown synthetic kind {kind!r}; expected one of {SYNTH_KINDS}")
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    rng = np.random.default_rng([seed, _KIND_CODE[kind], config.electrodes, duration])
    E = config.electrodes
    t = np.arange(duration, dtype=np.float64)
    data = np.zeros((E, duration))
    result = SyntheticSet(kind=kind, chunks=[])

    if kind == "noise":
        data = rng.normal(0.0, noise_std, size=(E, duration))
    elif kind == "sine":
        freqs = rng.uniform(5.0, 300.0, size=E)
        amps = rng.uniform(1000.0, 5000.0, size=E)
        phases = rng.uniform(0, 2 * np.pi, size=E)
        data = amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] / config.sample_rate + phases[:, None])
    elif kind == "seizure-burst":
        data = rng.normal(0.0, noise_std, size=(E, duration))
        start = duration // 3 if burst_start is None else burst_start
        length = min(duration - start, duration // 3 if burst_length is None else burst_length)
        elec = range(E) if burst_electrodes is None else burst_electrodes
        # shared spike-and-wave shape: fundamental plus harmonics and a slow envelope
        tb = np.arange(length, dtype=np.float64)
        f = burst_freq_hz / config.sample_rate
        wave = (np.sin(2 * np.pi * f * tb) + 0.5 * np.sin(4 * np.pi * f * tb + 0.7)
                + 0.25 * np.sign(np.sin(2 * np.pi * f * tb)))
        env = 0.6 + 0.4 * np.sin(np.pi * tb / max(1, length))
        burst = burst_amplitude * env * wave / 1.75
        for e in elec:
            data[e, start:start + length] += burst
            result.bursts.append(BurstEvent(int(e), int(start), int(length)))
    elif kind == "spike-train":
        templates = spike_templates(n_templates, seed=seed)
        L = templates.shape[1]
        data = rng.normal(0.0, noise_std, size=(E, duration))
        n_expected = spike_rate_hz * duration / config.sample_rate
        for e in range(E):
            count = rng.poisson(n_expected)
            pos = 0
            placed = []
            for _ in range(count):
                gap = int(rng.integers(2 * L, 6 * L))
                pos += gap
                if pos + L > duration:
                    break
                placed.append(pos)
            for p in placed:
                k = int(rng.integers(n_templates))
                scale = float(rng.uniform(0.9, 1.1))
                data[e, p:p + L] += scale * templates[k]
                result.spikes.append(SpikeEvent(e, p, k, scale))
        result.templates = templates

    data16 = _clip16(data)
    result.chunks = [SignalChunk(e, 0, data16[e]) for e in range(E)]
    return result


# --------------------------------------------------------------------------
# raw files

def _meta_path(path) -> str:
    return os.fspath(path) + ".meta"


def write_raw(path, chunks: list[SignalChunk], config: ArrayConfig | None = None) -> None:
    """Write chunks as an interleaved int16 file plus sidecar metadata."""
    if config is None:
        config = ArrayConfig(electrodes=len(chunks))
    if len(chunks) != config.electrodes:
        raise ConfigurationError("need exactly one chunk per electrode")
    lengths = {c.samples.size for c in chunks}
    if len(lengths) != 1:
        raise ConfigurationError("all chunks must have the same length")
    ordered = sorted(chunks, key=lambda c: c.electrode_id)
    frames = np.stack([c.samples for c in ordered], axis=1).astype("<i2")
    with open(path, "wb") as fh:
        fh.write(frames.tobytes())
    with open(_meta_path(path), "w") as fh:
        fh.write(f"electrodes={config.electrodes}\n")
        fh.write(f"sample_rate_hz={config.sample_rate:g}\n")
        fh.write(f"sample_bits={config.sample_bits}\n")


def read_metadata(path) -> ArrayConfig:
    meta = {}
    with open(_meta_path(path)) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    try:
        return ArrayConfig(electrodes=int(meta["electrodes"]),
                           sample_rate=float(meta.get("sample_rate_hz", 30000)),
                           sample_bits=int(meta.get("sample_bits", 16)))
    except KeyError as exc:
        raise IngestionError(f"metadata missing key {exc}") from None


def ingest_raw(path, config: ArrayConfig | None = None) -> list[SignalChunk]:
    """Read an interleaved int16 file, de-interleaving one chunk per electrode."""
    if config is None:
        config = read_metadata(path)
    raw = open(path, "rb").read()
    frame = config.electrodes * 2
    tail = len(raw) % frame
    if tail:
        offset = len(raw) - tail
        raise IngestionError(f"truncated frame at byte offset {offset} ({tail} trailing bytes)", offset=offset)
    if not raw:
        raise IngestionError("empty raw file", offset=0)
    frames = np.frombuffer(raw, dtype="<i2").reshape(-1, config.electrodes)
    return [SignalChunk(e, 0, frames[:, e].astype(np.int16)) for e in range(config.electrodes)]
