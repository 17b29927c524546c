"""Brute-force reference solvers for small problems.

These are slow on purpose and share no code path with the ADMM solver or
the envelope recursion beyond function evaluation, so they can serve as
independent ground truth in tests:

* :func:`exhaustive` grids the affine feasible set directly (few degrees
  of freedom),
* :func:`dp_solve` combines per-component value functions over a grid of
  constraint values (one or two constraint rows),
* :func:`prox_oracle` and :func:`envelope_oracle` check the univariate
  operations by sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, TooManyConstraintRows, TooManyDegreesOfFreedom
from .pwq import PiecewiseQuadratic, PwqArray
from .sap import SapProblem

MAX_FREE = 4
MAX_DP_ROWS = 2


@dataclass
class GridSpec:
    """Grid step, optional per-component box and a cap on evaluated points.

    Components without an explicit bound use their domain bounds; infinite
    ends are replaced by the breakpoint range widened ``padding`` times.
    """

    step: float = 1e-2
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    budget: int = 20_000_000
    padding: float = 10.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")


def _interesting_points(f: PiecewiseQuadratic) -> list[float]:
    pts = list(f.breakpoints())
    for pc in f.pieces:
        if pc.p > 0:
            pts.append(-pc.q / (2 * pc.p))
    return pts or [0.0]


def _box(f: PiecewiseQuadratic, padding: float) -> tuple[float, float]:
    pts = _interesting_points(f) + [0.0]
    lo_p, hi_p = min(pts), max(pts)
    width = padding * max(hi_p - lo_p, 1.0)
    lo = f.lower if math.isfinite(f.lower) else lo_p - width
    hi = f.upper if math.isfinite(f.upper) else hi_p + width
    return lo, hi


def _boxes(p: SapProblem, g: GridSpec):
    lo = np.empty(p.n)
    hi = np.empty(p.n)
    for i, fi in enumerate(p.f):
        lo[i], hi[i] = _box(fi, g.padding)
    if g.lower is not None:
        lo = np.maximum(lo, np.broadcast_to(np.asarray(g.lower, float), lo.shape))
    if g.upper is not None:
        hi = np.minimum(hi, np.broadcast_to(np.asarray(g.upper, float), hi.shape))
    return lo, hi


def _eval_columns(batch: PwqArray, X: np.ndarray) -> np.ndarray:
    """Objective value of every column of ``X`` (shape ``(n, N)``)."""
    Xe = X[:, None, :]
    P, Q, R = batch.P[:, :, None], batch.Q[:, :, None], batch.R[:, :, None]
    covered = batch.valid[:, :, None] & (batch.LO[:, :, None] <= Xe) & (Xe <= batch.HI[:, :, None])
    vals = np.where(covered, (P * Xe + Q) * Xe + R, np.inf).min(axis=1)
    return vals.sum(axis=0)


def _null_space(M: np.ndarray, tol: float = 1e-10):
    """Orthonormal basis of the null space of ``M`` and its rank."""
    if M.size == 0:
        return np.eye(M.shape[1]), 0
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(M.shape) * (s[0] if s.size else 0.0)))
    return vt[rank:].T, rank


def _point_locations(f: PiecewiseQuadratic) -> list[float]:
    return [pc.a for pc in f.pieces if pc.is_point]


def exhaustive(p: SapProblem, g: GridSpec | None = None):
    """Grid search over the feasible set ``{x : A x = b}``.

    The set is parameterized by an orthonormal null-space basis.  Isolated
    points of the domains (point pieces) have measure zero and would be
    missed by a grid, so every way of pinning up to ``n - rank(A)``
    components to one of their point pieces is searched as well.
    Returns ``(x, value)``; ``x`` is ``None`` if no grid point is feasible.
    """
    g = g or GridSpec()
    A = p.dense_A()
    N, rank = _null_space(A)
    dof = p.n - rank
    if dof > MAX_FREE:
        raise TooManyDegreesOfFreedom(f"{dof} free directions; at most {MAX_FREE} supported")
    x0, *_ = np.linalg.lstsq(A, p.b, rcond=None) if p.m else (np.zeros(p.n),)
    if p.m and np.linalg.norm(A @ x0 - p.b) > 1e-8 * (1 + np.linalg.norm(p.b)):
        return None, math.inf
    lo, hi = _boxes(p, g)
    batch = p.batch

    pinnable = [(i, _point_locations(fi)) for i, fi in enumerate(p.f)]
    pinnable = [(i, locs) for i, locs in pinnable if locs]
    tasks = []
    for size in range(0, min(dof, len(pinnable)) + 1):
        for subset in itertools.combinations(pinnable, size):
            idx = [i for i, _ in subset]
            for values in itertools.product(*[locs for _, locs in subset]):
                tasks.append((idx, np.array(values, dtype=float)))

    # bound the total work before evaluating anything
    plans = []
    total = 0
    for idx, vals in tasks:
        if idx:
            NS = N[idx]
            w, *_ = np.linalg.lstsq(NS, vals - x0[idx], rcond=None)
            if np.linalg.norm(NS @ w - (vals - x0[idx])) > 1e-9 * (1 + np.abs(vals).max()):
                continue
            M, _ = _null_space(NS)
            M = N @ M
            xp = x0 + N @ w
            xp[idx] = vals
        else:
            M, xp = N, x0
        # range of each null-space coordinate t = M^T (x - xp) over the box
        lo_t = np.minimum(M * (lo - xp)[:, None], M * (hi - xp)[:, None]).sum(axis=0)
        hi_t = np.maximum(M * (lo - xp)[:, None], M * (hi - xp)[:, None]).sum(axis=0)
        axes = [np.arange(a, b + 0.5 * g.step, g.step) for a, b in zip(lo_t, hi_t)]
        count = int(np.prod([len(ax) for ax in axes])) if axes else 1
        total += count
        if total > g.budget:
            raise BudgetExceeded(f"grid search needs more than {g.budget} points")
        plans.append((xp, M, axes, idx, vals))

    best_x, best_v = None, math.inf
    chunk = max(1, 2_000_000 // max(1, p.n * batch.P.shape[1]))
    for xp, M, axes, idx, vals in plans:
        d = M.shape[1]
        if d == 0:
            X = xp[:, None]
            v = _eval_columns(batch, X)
            if v[0] < best_v:
                best_v, best_x = float(v[0]), X[:, 0].copy()
            continue
        shape = tuple(len(ax) for ax in axes)
        count = int(np.prod(shape))
        for start in range(0, count, chunk):
            flat = np.arange(start, min(count, start + chunk))
            coords = np.unravel_index(flat, shape)
            T = np.stack([ax[c] for ax, c in zip(axes, coords)])
            X = xp[:, None] + M @ T
            # keep the box clean and the pinned components exact
            if idx:
                X[idx] = vals[:, None]
            inside = np.all((X >= lo[:, None] - 1e-12) & (X <= hi[:, None] + 1e-12), axis=0)
            if not inside.any():
                continue
            X = X[:, inside]
            v = _eval_columns(batch, X)
            j = int(np.argmin(v))
            if v[j] < best_v:
                best_v, best_x = float(v[j]), X[:, j].copy()
    return best_x, best_v


class DpTable:
    """Value function of a subset of components over an integer grid of constraint values."""

    def __init__(self, offset: np.ndarray, values: np.ndarray):
        self.offset = offset  # integer grid index of values[0, ...]
        self.values = values
        self.children = None
        self.split = None  # for combined tables: grid index chosen for the left child
        self.argx = None  # for singleton tables: x achieving each value
        self.component = None


def _singleton(f: PiecewiseQuadratic, a: np.ndarray, k: int, lo: float, hi: float, h: float, budget: int):
    amax = float(np.abs(a).max())
    if amax == 0.0:
        xs = np.concatenate([np.linspace(lo, hi, 1001), _interesting_points(f)])
    else:
        count = int(math.ceil((hi - lo) * amax / h * 4)) + 1
        if count > budget:
            raise BudgetExceeded("singleton table too fine")
        xs = np.concatenate([np.linspace(lo, hi, count), _interesting_points(f)])
    xs = xs[(xs >= lo) & (xs <= hi)]
    vals = f(xs)
    ok = np.isfinite(vals)
    xs, vals = xs[ok], vals[ok]
    cells = np.rint(np.outer(xs, a) / h).astype(np.int64)  # (N, m)
    offset = cells.min(axis=0)
    shape = tuple(cells.max(axis=0) - offset + 1)
    if int(np.prod(shape)) > budget:
        raise BudgetExceeded("value table exceeds budget")
    table = np.full(shape, np.inf)
    argx = np.zeros(shape)
    flat = np.ravel_multi_index(tuple((cells - offset).T), shape)
    order = np.lexsort((vals, flat))  # sort by cell then value
    flat_sorted = flat[order]
    first = np.ones(len(order), bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    pick = order[first]
    table.ravel()[flat[pick]] = vals[pick]
    argx.ravel()[flat[pick]] = xs[pick]
    t = DpTable(offset, table)
    t.argx = argx
    t.component = k
    return t


def _combine(S: DpTable, T: DpTable, budget: int) -> DpTable:
    shape = tuple(np.array(S.values.shape) + np.array(T.values.shape) - 1)
    if int(np.prod(shape)) > budget:
        raise BudgetExceeded("combined table exceeds budget")
    out = np.full(shape, np.inf)
    split = np.full(shape, -1, dtype=np.int64)
    tshape = T.values.shape
    for flat_s in np.flatnonzero(np.isfinite(S.values)):
        pos = np.unravel_index(flat_s, S.values.shape)
        sl = tuple(slice(pi, pi + ti) for pi, ti in zip(pos, tshape))
        cand = S.values[pos] + T.values
        region = out[sl]
        better = cand < region
        region[better] = cand[better]
        split[sl][better] = flat_s
    t = DpTable(S.offset + T.offset, out)
    t.children = (S, T)
    t.split = split
    return t


def _backtrack(t: DpTable, cell: tuple, x: np.ndarray):
    if t.children is None:
        x[t.component] = t.argx[cell]
        return
    S, T = t.children
    s_flat = t.split[cell]
    s_cell = np.unravel_index(s_flat, S.values.shape)
    t_cell = tuple(c - sc for c, sc in zip(cell, s_cell))
    _backtrack(S, tuple(s_cell), x)
    _backtrack(T, t_cell, x)


def dp_solve(p: SapProblem, g: GridSpec | None = None):
    """Divide-and-conquer over value functions ``V_S(z) = inf{sum_S f_i(x_i) : sum_S x_i a_i = z}``.

    Tables live on the grid ``z = j * step``; pairs of tables are merged
    by min-plus convolution until one table remains, which is read at the
    grid cell nearest ``b``.  Returns ``(x, value)``.
    """
    g = g or GridSpec()
    if p.m > MAX_DP_ROWS:
        raise TooManyConstraintRows(f"{p.m} rows; at most {MAX_DP_ROWS} supported")
    A = p.dense_A()
    lo, hi = _boxes(p, g)
    h = g.step
    tables = [_singleton(fi, A[:, k], k, lo[k], hi[k], h, g.budget) for k, fi in enumerate(p.f)]
    while len(tables) > 1:
        merged = [_combine(tables[i], tables[i + 1], g.budget) for i in range(0, len(tables) - 1, 2)]
        if len(tables) % 2:
            merged.append(tables[-1])
        tables = merged
    root = tables[0]
    cell = np.rint(p.b / h).astype(np.int64) - root.offset
    if np.any(cell < 0) or np.any(cell >= np.array(root.values.shape)):
        return None, math.inf
    cell = tuple(int(c) for c in cell)
    value = float(root.values[cell])
    if not math.isfinite(value):
        return None, math.inf
    x = np.zeros(p.n)
    _backtrack(root, cell, x)
    return x, value


def _window(f: PiecewiseQuadratic, extra=(), pad: float = 1.0):
    pts = _interesting_points(f) + list(extra)
    lo = max(f.lower, min(pts) - pad)
    hi = min(f.upper, max(pts) + pad)
    return lo, hi


def sample_graph(f: PiecewiseQuadratic, step: float, lo: float, hi: float, budget: int = 50_000_000):
    """Grid over ``[lo, hi]`` plus all breakpoints inside it, with function values."""
    count = int(math.floor((hi - lo) / step)) + 1
    if count > budget:
        raise BudgetExceeded(f"{count} sample points exceed the budget")
    xs = lo + step * np.arange(count)
    extra = [t for t in f.breakpoints() if lo <= t <= hi]
    xs = np.unique(np.concatenate([xs, extra, [hi]]))
    return xs, f(xs)


def prox_oracle(f: PiecewiseQuadratic, u, step: float = 1e-4, budget: int = 50_000_000):
    """Grid minimizer of ``f(x) + (x - u)**2 / 2`` for a scalar or array of ``u``.

    Returns ``(x, objective)`` arrays shaped like ``u``.
    """
    us = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = _window(f, extra=[us.min(), us.max()], pad=1.0)
    xs, fx = sample_graph(f, step, lo, hi, budget)
    ok = np.isfinite(fx)
    xs, fx = xs[ok], fx[ok]
    best_x = np.empty(len(us))
    best_v = np.empty(len(us))
    for j, uj in enumerate(us):
        obj = fx + 0.5 * (xs - uj) ** 2
        k = int(np.argmin(obj))
        best_x[j], best_v[j] = xs[k], obj[k]
    if np.ndim(u) == 0:
        return float(best_x[0]), float(best_v[0])
    return best_x, best_v


def lower_hull(xs: np.ndarray, ys: np.ndarray):
    """Lower convex hull of points sorted by ``x`` (monotone chain)."""
    hx: list[float] = []
    hy: list[float] = []
    for x, y in zip(xs, ys):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (hy[-1] - hy[-2]) * (x - hx[-2])
            if cross <= 0:
                hx.pop()
                hy.pop()
            else:
                break
        if hx and x == hx[-1]:
            if y < hy[-1]:
                hy[-1] = y
            continue
        hx.append(x)
        hy.append(y)
    return np.array(hx), np.array(hy)


class HullOracle:
    """Piecewise-linear lower hull of a sampled graph, evaluated by interpolation."""

    def __init__(self, xs, ys):
        self.xs, self.ys = lower_hull(xs, ys)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.ys)
        return np.where((x < self.xs[0]) | (x > self.xs[-1]), np.inf, out)


def envelope_oracle(f: PiecewiseQuadratic, step: float = 1e-3, lo=None, hi=None) -> HullOracle:
    """Lower convex hull of ``f`` sampled on a grid over a bounded window."""
    wlo, whi = _window(f, pad=1.0)
    lo = wlo if lo is None else max(lo, f.lower)
    hi = whi if hi is None else min(hi, f.upper)
    xs, fx = sample_graph(f, step, lo, hi)
    ok = np.isfinite(fx)
    return HullOracle(xs[ok], fx[ok])
