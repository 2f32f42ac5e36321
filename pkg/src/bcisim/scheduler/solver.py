"""Integer solve by branch-and-bound over LP relaxations, plus an exhaustive oracle.

Ties between optimal integer points are broken lexicographically: the
first variable as large as possible, then the second, and so on. The
branch-and-bound reaches that point by re-solving with the optimum pinned
as a constraint and each variable maximized in turn.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..errors import InfeasibleError
from .ilp import IlpInstance

INT_TOL = 1e-6


def _tol(v: float) -> float:
    return 1e-9 * max(1.0, abs(v))


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    nodes: int
    seconds: float
    method: str


def _most_violated(inst: IlpInstance, A, b, x) -> tuple[str, float]:
    if not len(b):
        return "bounds", 0.0
    viol = A @ x - b
    i = int(np.argmax(viol))
    return inst.rows[i].name, float(viol[i])


def _bnb(c_max: np.ndarray, A, b, lb, ub, deadline: float | None = None) -> tuple[np.ndarray | None, float, int]:
    """Maximize ``c_max @ x`` over integers in ``[lb, ub]`` with ``A x <= b``."""
    n = len(c_max)
    best_x, best_v = None, -math.inf
    # with integer weights every integer point's value is a multiple of their gcd,
    # so an LP bound can be rounded down to one
    integral = bool(np.all(np.abs(c_max - np.round(c_max)) <= 1e-12)) and np.any(c_max)
    step = math.gcd(*(int(abs(round(c))) for c in c_max)) if integral else 0
    stack = [(lb.astype(float), ub.astype(float))]
    explored = 0
    A_ub = A if len(b) else None
    b_ub = b if len(b) else None
    while stack:
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeoutError("branch-and-bound exceeded its time limit")
        lo, hi = stack.pop()
        explored += 1
        if np.any(lo > hi + INT_TOL):
            continue
        res = linprog(-c_max, A_ub=A_ub, b_ub=b_ub, bounds=list(zip(lo, hi)), method="highs")
        if res.status != 0:
            continue
        v = -res.fun
        if integral:
            v = step * math.floor(v / step + 1e-9)
        if best_x is not None and v <= best_v + _tol(best_v):
            continue
        x = res.x
        # rounding down is a cheap incumbent whenever it stays feasible
        xf = np.clip(np.floor(x + INT_TOL), lo, hi)
        if not len(b) or np.all(A @ xf <= b + 1e-7 * np.maximum(1.0, np.abs(b))):
            val = float(c_max @ xf)
            if best_x is None or val > best_v + _tol(best_v):
                best_x, best_v = xf, val
                if v <= best_v + _tol(best_v):
                    continue
        frac = np.abs(x - np.round(x))
        if np.all(frac <= INT_TOL):
            xi = np.round(x)
            if np.all(A @ xi <= b + 1e-7 * np.maximum(1.0, np.abs(b))) if len(b) else True:
                val = float(c_max @ xi)
                if best_x is None or val > best_v + _tol(best_v):
                    best_x, best_v = xi, val
                continue
        j = int(np.argmax(frac)) if np.any(frac > INT_TOL) else 0
        f = math.floor(x[j] + INT_TOL) if frac[j] <= INT_TOL else math.floor(x[j])
        down_hi = hi.copy()
        down_hi[j] = f
        up_lo = lo.copy()
        up_lo[j] = f + 1
        stack.append((lo, down_hi))
        stack.append((up_lo, hi))       # explored first: larger values tend to be better
    return best_x, best_v, explored


def solve_instance(inst: IlpInstance, time_limit: float | None = None, lexicographic: bool = True) -> Solution:
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + time_limit
    n = inst.n
    if n == 0:
        A, b = inst.matrix()
        if len(b) and np.any(b < -1e-9):
            name, v = _most_violated(inst, A, b, np.zeros(0))
            raise InfeasibleError(f"infeasible: row {name} violated by {v:.4g}", row=name, violation=v)
        return Solution(np.zeros(0), 0.0, 0, time.perf_counter() - t0, "trivial")
    A, b = inst.matrix()
    lb, ub = inst.lb.astype(float), inst.ub.astype(float)
    x, v, explored = _bnb(inst.weights, A, b, lb, ub, deadline)
    if x is None:
        name, viol = _most_violated(inst, A, b, lb)
        raise InfeasibleError(f"infeasible: row {name} violated by {viol:.4g} at the lower bounds",
                              row=name, violation=viol)
    if lexicographic:
        A2 = np.vstack([A, -inst.weights[None, :]]) if len(b) else -inst.weights[None, :]
        b2 = np.append(b, -(v - _tol(v)))
        lo, hi = lb.copy(), ub.copy()
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            xk, vk, more = _bnb(e, A2, b2, lo, hi, deadline)
            explored += more
            if xk is None:       # numerical corner: keep the current incumbent
                break
            lo[k] = hi[k] = round(vk)
            x = xk
        x = np.where(lo == hi, lo, x)
        v = float(inst.weights @ x)
    return Solution(x.astype(int), v, explored, time.perf_counter() - t0, "bnb")


def exhaustive_solve(inst: IlpInstance, chunk: int = 200_000) -> Solution:
    """Enumerate every integer point in the box; for small instances only."""
    t0 = time.perf_counter()
    A, b = inst.matrix()
    lb = inst.lb.astype(int)
    ub = inst.ub.astype(int)
    n = inst.n
    if n == 0:
        return Solution(np.zeros(0, int), 0.0, 1, 0.0, "exhaustive")
    axes = [np.arange(lb[j], ub[j] + 1) for j in range(n)]
    best_v, best_x = -math.inf, None
    tolb = 1e-7 * np.maximum(1.0, np.abs(b))
    # iterate over the first axis in slabs to bound memory
    rest = np.array(list(itertools.product(*axes[1:]))) if n > 1 else np.zeros((1, 0), int)
    count = 0
    for x0 in axes[0]:
        pts = np.column_stack([np.full(len(rest), x0), rest])
        count += len(pts)
        ok = np.all(pts @ A.T <= b + tolb, axis=1) if len(b) else np.ones(len(pts), bool)
        if not ok.any():
            continue
        cand = pts[ok]
        vals = cand @ inst.weights
        vmax = float(vals.max())
        if best_x is None or vmax > best_v + _tol(best_v):
            best_v = vmax
            top = cand[vals >= vmax - _tol(vmax)]
            best_x = _lexmax(top)
        elif vmax >= best_v - _tol(best_v):
            top = cand[vals >= best_v - _tol(best_v)]
            best_x = _lexmax(np.vstack([top, best_x[None, :]]))
            best_v = max(best_v, vmax)
    if best_x is None:
        raise InfeasibleError("no integer point satisfies the constraints", row="oracle")
    return Solution(best_x.astype(int), float(inst.weights @ best_x), count, time.perf_counter() - t0, "exhaustive")


def _lexmax(pts: np.ndarray) -> np.ndarray:
    order = np.lexsort(pts.T[::-1])
    return pts[order[-1]]
