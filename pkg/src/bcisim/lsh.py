"""Locality-sensitive hash kernels for windows of neural signal.

The DTW-style hash runs three stages: random-projection sketch bits over
sliding sub-windows, n-gram counts of the bit string, and a consistent
weighted sample over those counts folded to 8 bits. Euclidean and
cross-correlation variants are the same pipeline with different
``(window_w, step_delta, ngram_n)`` presets. The EMD hash reuses the dot
product with a Gaussian vector and buckets its square root.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, NamedTuple

import numpy as np

from .errors import ConfigurationError

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SketchParams:
    window_w: int = 8
    step_delta: int = 4
    ngram_n: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.window_w < 1:
            raise ConfigurationError("window_w must be >= 1")
        if not 1 <= self.step_delta <= self.window_w:
            raise ConfigurationError("step_delta must be in [1, window_w]")
        if not 1 <= self.ngram_n <= 16:
            raise ConfigurationError("ngram_n must be in [1, 16]")


@dataclass(frozen=True)
class CwsParams:
    seed: int = 0
    output_bits: int = 8

    def __post_init__(self):
        if self.output_bits != 8:
            raise ConfigurationError("hash output is fixed at 8 bits")


@dataclass(frozen=True)
class EmdHashParams:
    seed: int = 0
    scale_w: float = 8.0
    offset_b: float | None = None   # None: drawn from the seed in [0, scale_w)

    def __post_init__(self):
        if self.scale_w <= 0:
            raise ConfigurationError("scale_w must be positive")
        if self.offset_b is not None and not 0 <= self.offset_b < self.scale_w:
            raise ConfigurationError("offset_b must lie in [0, scale_w)")

    @property
    def offset(self) -> float:
        if self.offset_b is not None:
            return self.offset_b
        return float(np.random.default_rng([self.seed, 0xE3D]).uniform(0, self.scale_w))


@dataclass(frozen=True, order=True)
class HashValue:
    value: int
    source_window_start: int = 0
    electrode_id: int = 0

    def __post_init__(self):
        if not 0 <= self.value <= 255:
            raise ValueError("hash values are 8-bit")


# named (window_w, step_delta, ngram_n) triples; cluster configs may override
PRESETS: dict[str, tuple[int, int, int]] = {
    "DTW": (8, 4, 8),
    "EUCLID": (4, 2, 8),
    "XCOR": (16, 4, 6),
}


def preset(name: str, seed: int = 0, presets: Mapping[str, tuple[int, int, int]] | None = None) -> SketchParams:
    table = PRESETS if presets is None else presets
    try:
        w, s, n = table[name.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown hash preset {name!r}") from None
    return SketchParams(w, s, n, seed)


# --------------------------------------------------------------------------
# random vectors

@lru_cache(maxsize=256)
def rademacher_vector(seed: int, length: int) -> np.ndarray:
    rng = np.random.default_rng([seed, length, 0xA11CE])
    v = rng.integers(0, 2, size=length) * 2 - 1
    v.setflags(write=False)
    return v


@lru_cache(maxsize=256)
def gaussian_vector(seed: int, length: int) -> np.ndarray:
    rng = np.random.default_rng([seed, length, 0x6A55])
    v = rng.standard_normal(length)
    v.setflags(write=False)
    return v


# --------------------------------------------------------------------------
# sketch and n-grams

def sketch_bits(window_signal, params: SketchParams, vector=None) -> np.ndarray:
    """One bit per sub-window: 1 iff its dot product with the ±1 vector is positive."""
    x = np.asarray(window_signal, dtype=np.float64)
    w, s = params.window_w, params.step_delta
    if x.size < w:
        return np.zeros(0, dtype=np.uint8)
    r = rademacher_vector(params.seed, w) if vector is None else np.asarray(vector, dtype=np.float64)
    subs = np.lib.stride_tricks.sliding_window_view(x, w)[::s]
    return (subs @ r > 0).astype(np.uint8)


def ngram_codes(bits, n: int) -> np.ndarray:
    """Integer code (MSB first) of every length-n substring."""
    b = np.asarray(bits, dtype=np.int64)
    if n < 1:
        raise ValueError("n must be >= 1")
    if b.size < n:
        return np.zeros(0, dtype=np.int64)
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return np.lib.stride_tricks.sliding_window_view(b, n) @ weights


def ngram_vector(bits, n: int) -> np.ndarray:
    """Dense count vector over all 2**n n-grams."""
    return np.bincount(ngram_codes(bits, n), minlength=1 << n)


def ngram_counts(bits, n: int) -> dict[str, int]:
    """Occurring n-grams (as bit strings) and their counts."""
    vec = ngram_vector(bits, n)
    return {format(k, f"0{n}b"): int(c) for k, c in enumerate(vec) if c}


# --------------------------------------------------------------------------
# consistent weighted sampling

@lru_cache(maxsize=4096)
def _cws_tables(seed: int, key_space: int):
    rng = np.random.default_rng([seed, key_space, 0xC35])
    r = rng.gamma(2.0, 1.0, size=key_space)
    c = rng.gamma(2.0, 1.0, size=key_space)
    beta = rng.uniform(0.0, 1.0, size=key_space)
    return r, c, beta


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fold8(seed: int, key: int, tick: int) -> int:
    """XOR-fold of a seeded key hash and tick hash down to one byte."""
    h = _mix64(seed * 0x1F3D5B79 + key) ^ _mix64((seed << 20) ^ (tick & 0xFFFFFFFF) ^ 0x5A5A)
    h ^= h >> 32
    h ^= h >> 16
    h ^= h >> 8
    return h & 0xFF


class MinHash(NamedTuple):
    value: int
    key: int
    tick: int
    degenerate: bool


def _as_weight_vector(counts) -> tuple[np.ndarray, int]:
    if isinstance(counts, Mapping):
        if not counts:
            return np.zeros(0), 1
        n = max(len(k) if isinstance(k, str) else int(k).bit_length() for k in counts)
        keys = [int(k, 2) if isinstance(k, str) else int(k) for k in counts]
        space = 1 << max(n, max(keys).bit_length(), 1)
        vec = np.zeros(space)
        for k, v in zip(keys, counts.values()):
            vec[k] = v
        return vec, space
    vec = np.asarray(counts, dtype=np.float64)
    return vec, vec.size


def weighted_minhash(counts, params: CwsParams = CwsParams(), key_space: int | None = None) -> MinHash:
    """Ioffe-style consistent weighted sample of a count vector, folded to 8 bits.

    ``counts`` is either a dense vector indexed by n-gram code or a mapping
    from bit-string n-grams to counts. ``key_space`` fixes the random tables
    (it must match between the two sides being compared; it defaults to the
    dense vector length, i.e. ``2**n``).
    """
    vec, space = _as_weight_vector(counts)
    if key_space is not None:
        if key_space < vec.size:
            raise ValueError("key_space smaller than the count vector")
        space = key_space
    nz = np.flatnonzero(vec > 0)
    if nz.size == 0:
        return MinHash(0, -1, 0, True)
    r, c, beta = _cws_tables(params.seed, space)
    rk, ck, bk = r[nz], c[nz], beta[nz]
    t = np.floor(np.log(vec[nz]) / rk + bk)
    y = np.exp(rk * (t - bk))
    a = ck / (y * np.exp(rk))
    i = int(np.argmin(a))
    key, tick = int(nz[i]), int(t[i])
    return MinHash(fold8(params.seed, key, tick), key, tick, False)


def weighted_jaccard(u, v) -> float:
    """Exact weighted Jaccard similarity of two count vectors or mappings."""
    if isinstance(u, Mapping) or isinstance(v, Mapping):
        keys = set(u) | set(v)
        num = sum(min(u.get(k, 0), v.get(k, 0)) for k in keys)
        den = sum(max(u.get(k, 0), v.get(k, 0)) for k in keys)
    else:
        a, b = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        num, den = np.minimum(a, b).sum(), np.maximum(a, b).sum()
    return float(num / den) if den else 1.0


# --------------------------------------------------------------------------
# full hashes

def dtw_hash(window_signal, sketch: SketchParams = SketchParams(), cws: CwsParams = CwsParams(),
             start: int = 0, electrode_id: int = 0) -> HashValue:
    bits = sketch_bits(window_signal, sketch)
    vec = ngram_vector(bits, sketch.ngram_n) if bits.size >= sketch.ngram_n else np.zeros(1 << sketch.ngram_n)
    mh = weighted_minhash(vec, cws)
    return HashValue(mh.value, start, electrode_id)


def emd_bucket(d: float, params: EmdHashParams) -> int:
    """Bucket a projection value: non-negative values count up from 0,
    negative values are mirrored down from 255, both modulo 256."""
    q = int(np.floor((np.sqrt(abs(d)) + params.offset) / params.scale_w))
    return q % 256 if d >= 0 else (255 - q) % 256


def emd_hash(signal, params: EmdHashParams = EmdHashParams(), start: int = 0, electrode_id: int = 0) -> HashValue:
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise ValueError("emd_hash needs a nonempty signal")
    d = float(x @ gaussian_vector(params.seed, x.size))
    return HashValue(emd_bucket(d, params), start, electrode_id)


def hash_windows(samples, window_len: int, step: int, sketch: SketchParams, cws: CwsParams,
                 electrode_id: int = 0, base: int = 0) -> list[HashValue]:
    """Hash every ``window_len`` window of ``samples`` starting each ``step`` samples."""
    x = np.asarray(samples)
    return [dtw_hash(x[s:s + window_len], sketch, cws, base + s, electrode_id)
            for s in range(0, x.size - window_len + 1, step)]


# --------------------------------------------------------------------------
# collision check

def collision_check(received, local_recent) -> list[tuple[HashValue, HashValue]]:
    """All (received, local) pairs with equal hash value.

    Received hashes are sorted once; each local hash is located by binary
    search and every equal received entry is paired with it.
    """
    rec = sorted(received, key=lambda h: (h.value, h.source_window_start, h.electrode_id))
    keys = [h.value for h in rec]
    out = []
    for loc in local_recent:
        lo = bisect.bisect_left(keys, loc.value)
        hi = bisect.bisect_right(keys, loc.value, lo)
        for j in range(lo, hi):
            out.append((rec[j], loc))
    return out
