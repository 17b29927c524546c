"""Piecewise-quadratic functions of one variable.

A :class:`PiecewiseQuadratic` is a finite list of quadratic pieces
``p*x**2 + q*x + r`` on closed intervals ``[a, b]`` (endpoints may be
infinite) and ``+inf`` everywhere else.  Where closed intervals touch, the
value is the minimum over the pieces that cover the point.  Every instance
is stored in an irreducible, sorted form.

The module also provides :class:`PwqArray`, which packs many functions into
padded numpy arrays so the componentwise operations used by the solver
(prox, evaluation, domain projection) run without Python loops.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDomain, InvalidInput, NotConvex, Unbounded, ZeroScale

INF = math.inf

# relative tolerance for continuity / slope checks in is_convex
CONVEX_TOL = 1e-9
# base tolerance for the tangency checks of the two-piece envelope
TANGENT_TOL = 1e-9


@dataclass(frozen=True)
class QuadPiece:
    """The quadratic ``p*x**2 + q*x + r`` restricted to ``[a, b]``."""

    p: float
    q: float
    r: float
    a: float
    b: float

    def __post_init__(self):
        for name in ("p", "q", "r", "a", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.p) and math.isfinite(self.q) and math.isfinite(self.r)):
            raise InvalidInput(f"piece coefficients must be finite: {self}")
        if math.isnan(self.a) or math.isnan(self.b) or self.a > self.b:
            raise InvalidInput(f"piece interval is invalid: [{self.a}, {self.b}]")
        if self.a == INF or self.b == -INF:
            raise InvalidInput(f"piece interval is empty: [{self.a}, {self.b}]")

    @property
    def is_point(self) -> bool:
        return self.a == self.b

    def value(self, x: float) -> float:
        return (self.p * x + self.q) * x + self.r

    def slope(self, x: float) -> float:
        return 2.0 * self.p * x + self.q

    def restrict(self, a: float, b: float) -> "QuadPiece":
        return QuadPiece(self.p, self.q, self.r, a, b)

    def bounded_below(self) -> bool:
        if self.a == -INF and not (self.p > 0 or (self.p == 0 and self.q <= 0)):
            return False
        if self.b == INF and not (self.p > 0 or (self.p == 0 and self.q >= 0)):
            return False
        return True

    def as_tuple(self):
        return (self.p, self.q, self.r, self.a, self.b)


def _canonical(piece: QuadPiece) -> QuadPiece:
    if piece.is_point:
        return QuadPiece(0.0, 0.0, piece.value(piece.a), piece.a, piece.a)
    return piece


def _normalize(pieces: Sequence[QuadPiece]) -> list[QuadPiece]:
    """Sort, split at interior point pieces, drop dominated points, merge."""
    pieces = [_canonical(pc) for pc in pieces]
    if not pieces:
        raise EmptyDomain()
    points = [pc for pc in pieces if pc.is_point]
    spans = sorted((pc for pc in pieces if not pc.is_point), key=lambda pc: (pc.a, pc.b))
    for left, right in zip(spans, spans[1:]):
        if right.a < left.b:
            raise InvalidInput(
                f"pieces overlap on an interval: [{left.a}, {left.b}] and [{right.a}, {right.b}]"
            )

    cuts = sorted({pc.a for pc in points})
    if cuts:
        split = []
        for s in spans:
            lo = bisect.bisect_right(cuts, s.a)
            hi = bisect.bisect_left(cuts, s.b)
            edges = [s.a, *cuts[lo:hi], s.b]
            split.extend(s.restrict(x0, x1) for x0, x1 in zip(edges, edges[1:]))
        spans = split

    lowest: dict[float, float] = {}
    for pc in points:
        lowest[pc.a] = min(lowest.get(pc.a, INF), pc.r)
    kept = []
    for t, v in lowest.items():
        covering = [s.value(t) for s in spans if s.a <= t <= s.b]
        if covering and v >= min(covering):
            continue
        kept.append(QuadPiece(0.0, 0.0, v, t, t))
    kept_at = {pc.a for pc in kept}

    merged: list[QuadPiece] = []
    for s in spans:
        if merged:
            last = merged[-1]
            if (
                last.b == s.a
                and s.a not in kept_at
                and (last.p, last.q, last.r) == (s.p, s.q, s.r)
            ):
                merged[-1] = last.restrict(last.a, s.b)
                continue
        merged.append(s)
    return sorted(merged + kept, key=lambda pc: (pc.a, pc.b))


def _encode_bound(x: float):
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    return x


def _decode_bound(x) -> float:
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return INF
        if s in ("-inf", "-infinity"):
            return -INF
        raise InvalidInput(f"bad interval endpoint {x!r}")
    return float(x)


class PiecewiseQuadratic:
    """Immutable piecewise-quadratic function with a min convention at shared points."""

    __slots__ = ("pieces", "_arrays")

    def __init__(self, pieces: Iterable[QuadPiece | Sequence[float]]):
        raw = [pc if isinstance(pc, QuadPiece) else QuadPiece(*pc) for pc in pieces]
        self.pieces: tuple[QuadPiece, ...] = tuple(_normalize(raw))
        self._arrays = None

    # constructors -----------------------------------------------------
    @classmethod
    def quadratic(cls, p=0.0, q=0.0, r=0.0, lo=-INF, hi=INF) -> "PiecewiseQuadratic":
        return cls([QuadPiece(p, q, r, lo, hi)])

    @classmethod
    def indicator(cls, lo=-INF, hi=INF) -> "PiecewiseQuadratic":
        return cls([QuadPiece(0.0, 0.0, 0.0, lo, hi)])

    @classmethod
    def points(cls, xs, values=None) -> "PiecewiseQuadratic":
        values = np.zeros(len(xs)) if values is None else values
        return cls([QuadPiece(0.0, 0.0, v, x, x) for x, v in zip(xs, values)])

    @classmethod
    def from_list(cls, items) -> "PiecewiseQuadratic":
        """Build from ``[{p, q, r, a, b}, ...]`` where a/b may be "-inf"/"inf"."""
        pieces = []
        for k, item in enumerate(items):
            try:
                pieces.append(
                    QuadPiece(
                        float(item.get("p", 0.0)),
                        float(item.get("q", 0.0)),
                        float(item.get("r", 0.0)),
                        _decode_bound(item["a"]),
                        _decode_bound(item["b"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInput(f"piece {k}: {exc}") from exc
        return cls(pieces)

    def to_list(self) -> list[dict]:
        return [
            {"p": pc.p, "q": pc.q, "r": pc.r, "a": _encode_bound(pc.a), "b": _encode_bound(pc.b)}
            for pc in self.pieces
        ]

    # basic queries ----------------------------------------------------
    @property
    def arrays(self):
        """Coefficient arrays ``(P, Q, R, A, B)``, one entry per piece."""
        if self._arrays is None:
            a = np.array([pc.as_tuple() for pc in self.pieces], dtype=float)
            self._arrays = tuple(a[:, k].copy() for k in range(5))
        return self._arrays

    def __len__(self):
        return len(self.pieces)

    def __call__(self, x):
        return evaluate(self, x)

    def __add__(self, other):
        return add(self, other)

    def __eq__(self, other):
        return isinstance(other, PiecewiseQuadratic) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def __repr__(self):
        body = ", ".join(
            f"({pc.p:g}, {pc.q:g}, {pc.r:g}) on [{pc.a:g}, {pc.b:g}]" for pc in self.pieces
        )
        return f"PiecewiseQuadratic([{body}])"

    @property
    def lower(self) -> float:
        return self.pieces[0].a

    @property
    def upper(self) -> float:
        return self.pieces[-1].b

    def breakpoints(self) -> list[float]:
        pts = {x for pc in self.pieces for x in (pc.a, pc.b) if math.isfinite(x)}
        return sorted(pts)

    def domain_intervals(self) -> list[tuple[float, float]]:
        """Maximal disjoint closed intervals making up the domain."""
        out: list[list[float]] = []
        for pc in self.pieces:
            if out and pc.a <= out[-1][1]:
                out[-1][1] = max(out[-1][1], pc.b)
            else:
                out.append([pc.a, pc.b])
        return [(lo, hi) for lo, hi in out]

    def bounded_below(self) -> bool:
        return all(pc.bounded_below() for pc in self.pieces)

    def _span_at(self, x: float) -> QuadPiece | None:
        for pc in self.pieces:
            if pc.a < x < pc.b:
                return pc
        return None


def simplify(f) -> PiecewiseQuadratic:
    """Irreducible form of ``f`` (a function or a raw sequence of pieces)."""
    if isinstance(f, PiecewiseQuadratic):
        return PiecewiseQuadratic(f.pieces)
    return PiecewiseQuadratic(f)


def evaluate(f: PiecewiseQuadratic, x):
    """Value of ``f`` at ``x`` (scalar or array); ``+inf`` off the domain."""
    P, Q, R, A, B = f.arrays
    xs = np.asarray(x, dtype=float)
    flat = xs.reshape(-1, 1)
    vals = np.where((A <= flat) & (flat <= B), (P * flat + Q) * flat + R, INF).min(axis=1)
    if xs.ndim == 0:
        return float(vals[0])
    return vals.reshape(xs.shape)


def add(f: PiecewiseQuadratic, g: PiecewiseQuadratic) -> PiecewiseQuadratic:
    """Pointwise sum; the domain is the intersection of the two domains."""
    bps = sorted(set(f.breakpoints()) | set(g.breakpoints()))
    edges = [-INF, *bps, INF]
    out = []
    for lo, hi in zip(edges, edges[1:]):
        if lo == -INF and hi == INF:
            mid = 0.0
        elif lo == -INF:
            mid = hi - 1.0
        elif hi == INF:
            mid = lo + 1.0
        else:
            mid = 0.5 * (lo + hi)
        pf, pg = f._span_at(mid), g._span_at(mid)
        if pf is not None and pg is not None:
            out.append(QuadPiece(pf.p + pg.p, pf.q + pg.q, pf.r + pg.r, lo, hi))
    for t in bps:
        v = evaluate(f, t) + evaluate(g, t)
        if v < INF:
            out.append(QuadPiece(0.0, 0.0, v, t, t))
    if not out:
        raise EmptyDomain("sum of functions with disjoint domains")
    return PiecewiseQuadratic(out)


def shift_scale_arg(f: PiecewiseQuadratic, e: float, s: float = 0.0) -> PiecewiseQuadratic:
    """The function ``x -> f(e*x + s)``."""
    if e == 0:
        raise ZeroScale("argument scale must be nonzero")
    out = []
    for pc in f.pieces:
        lo, hi = (pc.a - s) / e, (pc.b - s) / e
        if e < 0:
            lo, hi = hi, lo
        out.append(
            QuadPiece(
                pc.p * e * e,
                2.0 * pc.p * e * s + pc.q * e,
                pc.p * s * s + pc.q * s + pc.r,
                lo,
                hi,
            )
        )
    return PiecewiseQuadratic(out)


def scale_value(f: PiecewiseQuadratic, k: float) -> PiecewiseQuadratic:
    """The function ``x -> k * f(x)`` for ``k >= 0``; the domain is kept when ``k = 0``."""
    if not (k >= 0 and math.isfinite(k)):
        raise InvalidInput("value scale must be nonnegative and finite")
    return PiecewiseQuadratic([QuadPiece(k * pc.p, k * pc.q, k * pc.r, pc.a, pc.b) for pc in f.pieces])


# ---------------------------------------------------------------------
# argmin kernel shared by minimize, prox and the batched operations

def _limit_values(P, Q, R, X):
    """``(P*X + Q)*X + R`` with the limiting value where ``X`` is infinite."""
    finite = np.isfinite(X)
    Xf = np.where(finite, X, 0.0)
    vals = (P * Xf + Q) * Xf + R
    if finite.all():
        return vals
    s = np.sign(X)
    lim = np.where(
        P > 0,
        INF,
        np.where(P < 0, -INF, np.where(Q * s > 0, INF, np.where(Q * s < 0, -INF, R))),
    )
    return np.where(finite, vals, lim)


def _piece_argmin(P, Q, R, LO, HI, valid, ref=None):
    """Row-wise minimizer of ``P x^2 + Q x + R`` over the union of ``[LO, HI]``.

    All inputs are ``(n, K)`` arrays.  Ties are broken by distance to ``ref``
    (when given) and then by the smaller ``x``.  Returns ``(x, value)``.
    """
    convex = P > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = np.where(convex, -Q / (2.0 * P), 0.0)
    mid = np.clip(vertex, LO, HI)
    c_lo = np.where(convex, mid, LO)
    c_hi = np.where(convex, mid, HI)
    flat = ~convex & (P == 0) & (Q == 0)
    if flat.any():
        fill = np.where(np.isfinite(LO), LO, np.where(np.isfinite(HI), HI, np.clip(0.0, LO, HI)))
        c_lo = np.where(flat & ~np.isfinite(c_lo), fill, c_lo)
        c_hi = np.where(flat & ~np.isfinite(c_hi), fill, c_hi)
    cand = np.concatenate([c_lo, c_hi], axis=1)
    vals = np.concatenate([_limit_values(P, Q, R, c_lo), _limit_values(P, Q, R, c_hi)], axis=1)
    vals = np.where(np.concatenate([valid, valid], axis=1), vals, INF)

    vmin = vals.min(axis=1)
    tie = vals == vmin[:, None]
    if ref is not None:
        with np.errstate(invalid="ignore"):
            dist = np.where(tie, np.abs(cand - ref[:, None]), INF)
        dmin = dist.min(axis=1)
        tie &= dist == dmin[:, None]
    x = np.where(tie, cand, INF).min(axis=1)
    return x, vmin


def _single(f: PiecewiseQuadratic):
    P, Q, R, A, B = f.arrays
    return P[None, :], Q[None, :], R[None, :], A[None, :], B[None, :], np.ones((1, len(P)), bool)


def minimize(f: PiecewiseQuadratic) -> tuple[float, float]:
    """Global minimizer and minimum of ``f``; ties go to the smallest argmin."""
    P, Q, R, A, B, valid = _single(f)
    x, v = _piece_argmin(P, Q, R, A, B, valid)
    if v[0] == -INF:
        raise Unbounded()
    return float(x[0]), float(v[0])


def prox(f: PiecewiseQuadratic, u: float) -> float:
    """A global minimizer of ``f(x) + (x - u)**2 / 2``, nearest to ``u`` on ties."""
    P, Q, R, A, B, valid = _single(f)
    uu = np.array([float(u)])
    x, v = _piece_argmin(P + 0.5, Q - uu[:, None], R + 0.5 * uu[:, None] ** 2, A, B, valid, ref=uu)
    if v[0] == -INF:
        raise Unbounded("proximal objective is unbounded below")
    return float(x[0])


def is_convex(f: PiecewiseQuadratic, tol: float = CONVEX_TOL) -> bool:
    pcs = f.pieces
    if len(pcs) == 1:
        return pcs[0].p >= 0
    for pc in pcs:
        # after normalization a surviving point piece in a multi-piece
        # function is a downward jump or an isolated point
        if pc.is_point or pc.p < 0:
            return False
    for left, right in zip(pcs, pcs[1:]):
        t = left.b
        if t != right.a:
            return False
        vl, vr = left.value(t), right.value(t)
        if abs(vl - vr) > tol * (1.0 + max(abs(vl), abs(vr))):
            return False
        sl, sr = left.slope(t), right.slope(t)
        if sl > sr + tol * (1.0 + max(abs(sl), abs(sr))):
            return False
    return True


def prox_thresholds(f: PiecewiseQuadratic) -> list[float]:
    """Interleaved breakpoints ``(2p_j+1)a_j + q_j, (2p_j+1)b_j + q_j`` of the convex prox."""
    out = []
    for pc in f.pieces:
        k = 2.0 * pc.p + 1.0
        out.append(k * pc.a + pc.q)
        out.append(k * pc.b + pc.q)
    return out


def prox_convex(f: PiecewiseQuadratic, u: float) -> float:
    """Closed-form prox of a convex ``f`` by locating ``u`` among the prox thresholds."""
    if not is_convex(f):
        raise NotConvex("prox_convex requires a convex function")
    u = float(u)
    thresholds = prox_thresholds(f)
    i = bisect.bisect_right(thresholds, u)
    pcs = f.pieces
    if i == 0:
        return pcs[0].a
    if i % 2 == 1:
        pc = pcs[(i - 1) // 2]
        return -(pc.q - u) / (2.0 * (pc.p + 0.5))
    j = i // 2
    if j == len(pcs):
        return pcs[-1].b
    return pcs[j].a


# ---------------------------------------------------------------------
# convex envelope

def _tol(alpha: float, beta: float) -> float:
    return TANGENT_TOL * (1.0 + abs(alpha) + abs(beta))


def _quad_roots(A: float, B: float, C: float) -> list[float]:
    """Real roots of ``A x^2 + B x + C`` using the cancellation-free form."""
    if A == 0.0:
        return [] if B == 0.0 else [-C / B]
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        if disc < -1e-12 * (B * B + abs(4.0 * A * C)):
            return []
        disc = 0.0
    qq = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    if qq == 0.0:
        return [0.0]
    return [qq / A, C / qq]


def _finite_ends(pc: QuadPiece) -> list[float]:
    ends = [x for x in (pc.a, pc.b) if math.isfinite(x)]
    return ends[:1] if pc.is_point else ends


def _supports(g: QuadPiece, x: float, alpha: float, beta: float, tol: float) -> bool:
    """True if the line ``alpha*t + beta`` touches ``g`` at ``x`` and lies below it."""
    if math.isinf(x):
        if x not in (g.a, g.b):
            return False
        return g.p == 0 and abs(alpha - g.q) <= tol and beta <= g.r + tol
    if not (g.a <= x <= g.b):
        return False
    if abs(g.value(x) - (alpha * x + beta)) > tol * (1.0 + abs(x)):
        return False
    if g.is_point:
        return True
    s = g.slope(x)
    if x == g.a:
        return alpha <= s + tol
    if x == g.b:
        return alpha >= s - tol
    return abs(alpha - s) <= tol


def _bridge_candidates(g1: QuadPiece, g2: QuadPiece):
    """Candidate bridges ``(case, alpha, beta, x1, x2)`` in the order they are tried."""
    p1, q1, r1, a1, b1 = g1.as_tuple()
    p2, q2, r2, a2, b2 = g2.as_tuple()

    # tangent at interior points of both pieces
    if p1 > 0 and p2 > 0:
        dq = q1 - q2
        for x1 in _quad_roots(4.0 * p1 * (p1 - p2), 4.0 * p1 * dq, dq * dq + 4.0 * p2 * (r1 - r2)):
            alpha = 2.0 * p1 * x1 + q1
            yield "midpoint-midpoint", alpha, r1 - p1 * x1 * x1, x1, (alpha - q2) / (2.0 * p2)

    # tangent inside g1, through an endpoint of g2 (or parallel to an unbounded linear tail)
    if p1 > 0:
        for e in _finite_ends(g2):
            gap = g1.value(e) - g2.value(e)
            for d in _quad_roots(p1, 0.0, -gap):
                x1 = e + d
                yield "midpoint-endpoint", 2.0 * p1 * x1 + q1, r1 - p1 * x1 * x1, x1, e
        if b2 == INF and p2 == 0:
            x1 = (q2 - q1) / (2.0 * p1)
            yield "midpoint-endpoint", q2, r1 - p1 * x1 * x1, x1, INF

    # mirror image: endpoint of g1, tangent inside g2
    if p2 > 0:
        for e in _finite_ends(g1):
            gap = g2.value(e) - g1.value(e)
            for d in _quad_roots(p2, 0.0, -gap):
                x2 = e + d
                yield "endpoint-midpoint", 2.0 * p2 * x2 + q2, r2 - p2 * x2 * x2, e, x2
        if a1 == -INF and p1 == 0:
            x2 = (q1 - q2) / (2.0 * p2)
            yield "endpoint-midpoint", q1, r2 - p2 * x2 * x2, -INF, x2

    # line through endpoints
    for e1 in _finite_ends(g1):
        for e2 in _finite_ends(g2):
            if e1 < e2:
                alpha = (g2.value(e2) - g1.value(e1)) / (e2 - e1)
                yield "endpoint-endpoint", alpha, g1.value(e1) - alpha * e1, e1, e2
            elif e1 == e2:
                # the pieces meet; no bridge needed if they join convexly
                lo = g1.slope(e1) if not g1.is_point else -INF
                hi = g2.slope(e2) if not g2.is_point else INF
                alpha = lo if math.isfinite(lo) else (hi if math.isfinite(hi) else 0.0)
                yield "endpoint-endpoint", alpha, g1.value(e1) - alpha * e1, e1, e2
    if b2 == INF and p2 == 0:
        for e1 in _finite_ends(g1):
            yield "endpoint-endpoint", q2, g1.value(e1) - q2 * e1, e1, INF
    if a1 == -INF and p1 == 0:
        for e2 in _finite_ends(g2):
            yield "endpoint-endpoint", q1, g2.value(e2) - q1 * e2, -INF, e2
        if b2 == INF and p2 == 0:
            yield "endpoint-endpoint", q1, min(r1, r2), -INF, INF


def _bridge(g1: QuadPiece, g2: QuadPiece):
    """First valid ``(alpha, beta, x1, x2, case)`` for the envelope of two convex pieces."""
    for case, alpha, beta, x1, x2 in _bridge_candidates(g1, g2):
        if not (math.isfinite(alpha) and math.isfinite(beta)):
            continue
        tol = _tol(alpha, beta)
        if x1 <= x2 and _supports(g1, x1, alpha, beta, tol) and _supports(g2, x2, alpha, beta, tol):
            return alpha, beta, x1, x2, case
    return None


def _assemble(head: QuadPiece, tail: QuadPiece, alpha, beta, x1, x2) -> list[QuadPiece]:
    out = []
    if math.isfinite(x1) and x1 > head.a:
        out.append(head.restrict(head.a, x1))
    if x1 < x2:
        out.append(QuadPiece(0.0, alpha, beta, x1, x2))
    if math.isfinite(x2) and x2 < tail.b:
        out.append(tail.restrict(x2, tail.b))
    if not out:
        out.append(QuadPiece(0.0, 0.0, head.value(x1), x1, x1))
    return out


def envelope_two_piece(g1: QuadPiece, g2: QuadPiece, return_case: bool = False):
    """Convex envelope of the two-piece function ``min(g1, g2)`` with ``g1`` left of ``g2``.

    Returns at most three pieces: a head of ``g1``, a bridging line and a
    tail of ``g2``.  With ``return_case`` the bridge case that succeeded is
    returned as well (``None`` when one piece is redundant).
    """
    if g1.b > g2.a:
        raise InvalidInput("pieces must be ordered with g1 left of g2")
    if g1.p < 0 or g2.p < 0:
        raise NotConvex("both pieces must be convex")
    if not (g1.bounded_below() and g2.bounded_below()):
        raise Unbounded()
    f = PiecewiseQuadratic([g1, g2])
    if len(f.pieces) == 1:
        return (f, None) if return_case else f
    g1, g2 = f.pieces
    sol = _bridge(g1, g2)
    if sol is None:
        raise ArithmeticError(f"no valid bridge between {g1} and {g2}")
    alpha, beta, x1, x2, case = sol
    env = PiecewiseQuadratic(_assemble(g1, g2, alpha, beta, x1, x2))
    return (env, case) if return_case else env


def _convexified_pieces(f: PiecewiseQuadratic) -> list[QuadPiece]:
    # a concave piece lies above its chord, so its endpoints carry the same hull
    out = []
    for pc in f.pieces:
        if not pc.bounded_below():
            raise Unbounded()
        if pc.p < 0:
            out.append(QuadPiece(0.0, 0.0, pc.value(pc.a), pc.a, pc.a))
            out.append(QuadPiece(0.0, 0.0, pc.value(pc.b), pc.b, pc.b))
        else:
            out.append(pc)
    return list(PiecewiseQuadratic(out).pieces)


def _extend(psi: list[QuadPiece], phi: QuadPiece) -> list[QuadPiece]:
    """Envelope of ``min(psi, phi)`` for convex ``psi`` lying left of the convex piece ``phi``."""
    last = psi[-1]
    if phi.is_point and phi.a == last.b:
        v = last.value(last.b)
        if phi.r >= v - _tol(0.0, v):
            return psi
    for j in range(len(psi) - 1, -1, -1):
        g = psi[j]
        sol = _bridge(g, phi)
        if sol is None:
            continue
        alpha, beta, x1, x2, _ = sol
        tol = _tol(alpha, beta)
        if x1 == g.a and j > 0 and not psi[j - 1].is_point and psi[j - 1].slope(x1) > alpha + tol:
            continue
        if x1 == g.b and j < len(psi) - 1 and alpha > psi[j + 1].slope(x1) + tol:
            continue
        return psi[:j] + _assemble(g, phi, alpha, beta, x1, x2)
    raise ArithmeticError(f"envelope recursion found no supporting line for {phi}")


def envelope(f: PiecewiseQuadratic) -> PiecewiseQuadratic:
    """Convex envelope (largest convex minorant) of ``f``, built left to right."""
    pieces = _convexified_pieces(f)
    psi = [pieces[0]]
    for phi in pieces[1:]:
        psi = _extend(psi, phi)
    return PiecewiseQuadratic(psi)


# ---------------------------------------------------------------------
# many functions at once

class PwqArray:
    """A sequence of functions stored as padded ``(n, K)`` coefficient arrays."""

    def __init__(self, funcs: Sequence[PiecewiseQuadratic]):
        self.funcs = tuple(funcs)
        n = len(self.funcs)
        K = max((len(f.pieces) for f in self.funcs), default=1)
        self.P = np.zeros((n, K))
        self.Q = np.zeros((n, K))
        self.R = np.zeros((n, K))
        self.LO = np.zeros((n, K))
        self.HI = np.zeros((n, K))
        self.valid = np.zeros((n, K), dtype=bool)
        for i, f in enumerate(self.funcs):
            P, Q, R, A, B = f.arrays
            k = len(P)
            self.P[i, :k], self.Q[i, :k], self.R[i, :k] = P, Q, R
            self.LO[i, :k], self.HI[i, :k] = A, B
            self.valid[i, :k] = True

    def __len__(self):
        return len(self.funcs)

    def take(self, rows) -> "PwqArray":
        out = object.__new__(PwqArray)
        out.funcs = tuple(self.funcs[i] for i in rows)
        for name in ("P", "Q", "R", "LO", "HI", "valid"):
            setattr(out, name, getattr(self, name)[rows])
        return out

    def eval(self, x) -> np.ndarray:
        """Componentwise values ``f_i(x_i)``."""
        xc = np.asarray(x, dtype=float)[:, None]
        covered = self.valid & (self.LO <= xc) & (xc <= self.HI)
        return np.where(covered, (self.P * xc + self.Q) * xc + self.R, INF).min(axis=1)

    def prox(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        uc = u[:, None]
        x, v = _piece_argmin(
            self.P + 0.5, self.Q - uc, self.R + 0.5 * uc * uc, self.LO, self.HI, self.valid, ref=u
        )
        if np.any(v == -INF):
            raise Unbounded("proximal objective is unbounded below", index=int(np.argmin(v)))
        return x

    def min_linear(self, c) -> np.ndarray:
        """Componentwise ``inf_x f_i(x) - c_i x`` (may be ``-inf``)."""
        c = np.asarray(c, dtype=float)[:, None]
        _, v = _piece_argmin(self.P, self.Q - c, self.R, self.LO, self.HI, self.valid)
        return v

    def project_domain(self, x):
        """Nearest domain points and distances, componentwise.

        Equidistant candidates are resolved by the smaller function value and
        then the smaller coordinate.
        """
        x = np.asarray(x, dtype=float)
        c = np.clip(x[:, None], self.LO, self.HI)
        d = np.where(self.valid, np.abs(x[:, None] - c), INF)
        dmin = d.min(axis=1)
        tie = d == dmin[:, None]
        v = np.where(tie, (self.P * c + self.Q) * c + self.R, INF)
        vmin = v.min(axis=1)
        tie &= v == vmin[:, None]
        proj = np.where(tie, c, INF).min(axis=1)
        return proj, dmin
