"""Brute-force integer packing: enumerate every point of the box, keep the best feasible value."""
import itertools

import numpy as np


def best_value(weights, A, b, ub):
    """Maximum of weights @ x over integer 0 <= x <= ub with A x <= b, or None if nothing is feasible."""
    w = np.asarray(weights, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    best = None
    head = [range(int(u) + 1) for u in ub[:-1]]
    last = np.arange(int(ub[-1]) + 1, dtype=float)
    for prefix in itertools.product(*head):
        p = np.asarray(prefix, dtype=float)
        base_lhs = A[:, :-1] @ p
        lhs = base_lhs[:, None] + A[:, -1:] * last[None, :]
        ok = np.all(lhs <= b[:, None] + 1e-9, axis=0)
        if ok.any():
            v = float(w[:-1] @ p + w[-1] * last[ok].max()) if w[-1] >= 0 else float(w[:-1] @ p + w[-1] * last[ok].min())
            best = v if best is None else max(best, v)
    return best
