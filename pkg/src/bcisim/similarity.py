"""Exact comparison measures: banded DTW, Euclidean, cross-correlation, 1-D EMD.

These are the confirmation step behind the hashes and also serve as the
reference the hash tests are scored against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError

DEFAULT_BAND_RADIUS = 10


@dataclass(frozen=True)
class BandParam:
    """Sakoe-Chiba half-width: cells with ``|i - j| < radius`` are admissible.

    ``radius=None`` means unbounded.
    """
    radius: int | None = DEFAULT_BAND_RADIUS

    def __post_init__(self):
        if self.radius is not None and self.radius < 1:
            raise ValueError("band radius must be >= 1")


UNBOUNDED = BandParam(None)


@dataclass(frozen=True)
class MeasureResult:
    value: float
    measure: str
    lag: int | None = None
    degenerate: bool = False

    def __float__(self):
        return float(self.value)


def _as_float(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("inputs must be nonempty 1-D sequences")
    return a


def dtw_banded(a, b, band: BandParam = BandParam(), cost: str = "abs") -> MeasureResult:
    """Dynamic time warping restricted to a Sakoe-Chiba band.

    Each row of the DP is solved in one vectorized min-plus scan: with
    ``u[j] = min(D[i-1, j], D[i-1, j-1])`` and row costs ``c``, the row is
    ``D[i, j] = min_k<=j (u[k] + c[k] + ... + c[j])``.
    """
    x, y = _as_float(a), _as_float(b)
    n, m = x.size, y.size
    if cost not in ("abs", "squared"):
        raise ValueError(f"unknown cost {cost!r}")
    r = band.radius if band.radius is not None else max(n, m)
    if r == 1 and n != m:
        raise ValueError("radius 1 (diagonal only) requires equal lengths")
    if abs(n - m) >= r:
        raise ValueError(f"no admissible warping path: |{n}-{m}| >= band radius {r}")
    if r == 1:
        d = x - y
        v = np.abs(d).sum() if cost == "abs" else (d * d).sum()
        return MeasureResult(float(v), "dtw")

    inf = np.inf
    prev = np.full(m + 1, inf)     # prev[j+1] holds D[i-1, j]; prev[0] is the virtual origin column
    prev[0] = 0.0
    for i in range(n):
        lo = max(0, i - r + 1)
        hi = min(m - 1, i + r - 1)
        cols = np.arange(lo, hi + 1)
        diff = x[i] - y[cols]
        c = np.abs(diff) if cost == "abs" else diff * diff
        u = np.minimum(prev[cols + 1], prev[cols])   # from above, from diagonal
        cs = np.cumsum(c)
        shifted = np.concatenate(([0.0], cs[:-1]))
        row = cs + np.minimum.accumulate(u - shifted)
        cur = np.full(m + 1, inf)
        cur[cols + 1] = row
        prev = cur
    v = prev[m]
    return MeasureResult(float(v), "dtw")


def dtw_full_matrix(a, b, cost: str = "abs") -> float:
    """Plain O(n*m) DTW without a band; kept as the textbook reference."""
    x, y = _as_float(a), _as_float(b)
    n, m = x.size, y.size
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d = x[i - 1] - y[j - 1]
            c = abs(d) if cost == "abs" else d * d
            D[i, j] = c + min(D[i - 1, j], D[i, j - 1], D[i - 1, j - 1])
    return float(D[n, m])


def euclidean(a, b) -> MeasureResult:
    x, y = _as_float(a), _as_float(b)
    if x.size != y.size:
        raise ValueError("euclidean distance needs equal lengths")
    d = x - y
    return MeasureResult(float(np.sqrt(np.dot(d, d))), "euclidean")


def xcorr(a, b, min_overlap: int | None = None) -> MeasureResult:
    """Maximum-magnitude Pearson correlation over lags.

    Every lag whose overlap has at least ``min_overlap`` samples (default:
    half the shorter input) is scored with a Pearson coefficient on the
    overlapping segments. The lag with the largest ``|r|`` wins; ties go to
    the smallest ``|lag|`` then to the positive lag. The signed coefficient
    is returned. ``lag`` is the shift applied to ``b`` (``b[k - lag]``
    aligned with ``a[k]``).
    """
    x, y = _as_float(a), _as_float(b)
    n, m = x.size, y.size
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return MeasureResult(0.0, "xcorr", lag=0, degenerate=True)
    if min_overlap is None:
        min_overlap = max(2, (min(n, m) + 1) // 2)
    best_r, best_lag = 0.0, 0
    found = False
    lags = sorted(range(-(m - 1), n), key=lambda L: (abs(L), -L))
    for lag in lags:
        # a[k] vs b[k - lag]
        k0 = max(0, lag)
        k1 = min(n, m + lag)
        if k1 - k0 < min_overlap:
            continue
        xa = x[k0:k1]
        yb = y[k0 - lag:k1 - lag]
        xa = xa - xa.mean()
        yb = yb - yb.mean()
        den = np.sqrt(np.dot(xa, xa) * np.dot(yb, yb))
        if den == 0:
            continue
        r = float(np.dot(xa, yb) / den)
        if not found or abs(r) > abs(best_r) + 1e-12:
            best_r, best_lag, found = r, lag, True
    return MeasureResult(float(np.clip(best_r, -1.0, 1.0)), "xcorr", lag=best_lag, degenerate=not found)


def to_mass(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Shift both inputs by their joint minimum (if negative) and normalize each to unit mass."""
    x, y = _as_float(a), _as_float(b)
    lo = min(x.min(), y.min())
    if lo < 0:
        x = x - lo
        y = y - lo
    sx, sy = x.sum(), y.sum()
    if sx <= 0 or sy <= 0:
        raise DegenerateInputError("EMD needs nonzero mass in both inputs")
    return x / sx, y / sy


def emd_1d(a, b) -> MeasureResult:
    """Earth mover's distance between two 1-D histograms with unit bin spacing."""
    x, y = _as_float(a), _as_float(b)
    if x.size != y.size:
        raise ValueError("emd_1d needs equal lengths")
    p, q = to_mass(x, y)
    return MeasureResult(float(np.abs(np.cumsum(p - q)).sum()), "emd")
