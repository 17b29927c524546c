"""Tax-aware mean-variance rebalancing as a separable-affine problem.

The portfolio problem

    maximize    alpha^T h - g_risk h^T V h - g_trd phi_trd(h - h_init) - g_hld phi_hld(h)
    subject to  eta_lb <= 1^T h <= eta_ub,     V = X Sigma X^T + diag(D)

is rewritten with cash ``c = 1 - 1^T h`` and factor exposures
``y = C^T X^T h`` (``C C^T = Sigma``) and negated, giving a separable
objective in ``x = (h, c, y)`` under the constraints

    [ C^T X^T  0  -I ] x = [0]
    [ 1^T      1   0 ]     [1].

Each asset's trading and holding costs are built as piecewise-quadratic
functions by the constructors below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyDomain, InvalidInput, LotMismatch, UnboundedInteger
from .pwq import INF, PiecewiseQuadratic, QuadPiece, add, scale_value, shift_scale_arg
from .sap import SapProblem, Scaling

LOT_ORDERS = ("hifo", "fifo")


@dataclass(frozen=True)
class TaxLot:
    """A parcel of one asset; ``weight`` is its share of portfolio value."""

    weight: float
    basis_fraction: float
    rate: float

    def __post_init__(self):
        if self.weight < 0 or self.rate < 0 or not math.isfinite(self.basis_fraction):
            raise InvalidInput(f"invalid tax lot {self}")


# ---------------------------------------------------------------------
# cost terms (all functions of the trade u or the holding h of one asset)

def spread_cost(s: float) -> PiecewiseQuadratic:
    """``s |u|``, with ``s`` the half spread."""
    return PiecewiseQuadratic([QuadPiece(0, -s, 0, -INF, 0), QuadPiece(0, s, 0, 0, INF)])


def impact_cost_approx(d: float, u_max: float, segments: int = 16):
    """Convex piecewise-quadratic stand-in for ``d |u|^(3/2)``.

    On each of ``segments`` equal segments per side of ``[-u_max, u_max]``
    the approximation equals the chord through the knots minus a bowl
    ``p_s (u - u0)(u1 - u)``.  The bowl curvature is the target's own mid-
    segment curvature, capped so slopes stay nondecreasing across knots.
    Beyond ``u_max`` it continues along its tangent.  Returns the function
    and the largest error on ``[0, u_max]`` relative to ``d u_max^(3/2)``.
    """
    if d == 0:
        return PiecewiseQuadratic.quadratic(), 0.0
    if d < 0 or not u_max > 0 or segments < 1:
        raise InvalidInput("impact needs d >= 0, u_max > 0 and segments >= 1")
    knots = np.linspace(0.0, u_max, segments + 1)
    L = knots[1] - knots[0]
    vals = d * knots**1.5
    chord = np.diff(vals) / L
    # slope jumps at each knot; at zero the mirrored segment has slope -chord[0]
    jumps = np.concatenate([[2 * chord[0]], np.diff(chord)]) / L
    mids = 0.5 * (knots[:-1] + knots[1:])
    ideal = 0.5 * 0.75 * d / np.sqrt(mids)
    left = jumps
    right = np.concatenate([jumps[1:], [np.inf]])
    curv = np.minimum(ideal, 0.5 * np.minimum(left, right))
    pieces = []
    for s in range(segments):
        u0, u1, c0, p = knots[s], knots[s + 1], vals[s], curv[s]
        # chord: c0 + chord*(u - u0);  bowl: -p (u - u0)(u1 - u) = p u^2 - p (u0 + u1) u + p u0 u1
        qq = chord[s] - p * (u0 + u1)
        rr = c0 - chord[s] * u0 + p * u0 * u1
        pieces.append(QuadPiece(p, qq, rr, u0, u1))
        pieces.append(QuadPiece(p, -qq, rr, -u1, -u0))
    tail_slope = chord[-1] + curv[-1] * L
    tail_r = vals[-1] - tail_slope * u_max
    pieces.append(QuadPiece(0, tail_slope, tail_r, u_max, INF))
    pieces.append(QuadPiece(0, -tail_slope, tail_r, -INF, -u_max))
    f = PiecewiseQuadratic(pieces)
    grid = np.linspace(0.0, u_max, 200 * segments + 1)
    err = np.max(np.abs(f(grid) - d * grid**1.5)) / (d * u_max**1.5)
    return f, float(err)


def min_trade_size(u_min: float, lo: float = -INF, hi: float = INF) -> PiecewiseQuadratic:
    """Indicator of ``{0} union {|u| >= u_min}`` within ``[lo, hi]``."""
    pieces = [QuadPiece(0, 0, 0, 0, 0)]
    if lo <= -u_min:
        pieces.append(QuadPiece(0, 0, 0, lo, -u_min))
    if hi >= u_min:
        pieces.append(QuadPiece(0, 0, 0, u_min, hi))
    return PiecewiseQuadratic(pieces)


def _fixed_cost(c: float, lo: float, hi: float) -> PiecewiseQuadratic:
    pieces = [QuadPiece(0, 0, 0, 0, 0)]
    if lo < 0:
        pieces.append(QuadPiece(0, 0, c, lo, 0))
    if hi > 0:
        pieces.append(QuadPiece(0, 0, c, 0, hi))
    return PiecewiseQuadratic(pieces)


def per_trade_cost(c_trd: float, lo: float = -INF, hi: float = INF) -> PiecewiseQuadratic:
    """``c_trd`` for any nonzero trade, 0 for no trade."""
    return _fixed_cost(c_trd, lo, hi)


def per_asset_holding_cost(c_hld: float, lo: float = -INF, hi: float = INF) -> PiecewiseQuadratic:
    """``c_hld`` for any nonzero holding, 0 for none."""
    return _fixed_cost(c_hld, lo, hi)


def tax_liability(lots, h_init: float, order: str = "hifo") -> PiecewiseQuadratic:
    """Realized capital-gains tax as a function of the trade ``u`` in one asset.

    Buying (``u >= 0``) realizes nothing.  Selling ``-u`` draws down the lots
    in the given order (highest basis first by default); each unit sold from
    a lot realizes ``rate * (1 - basis_fraction)``, negative for a loss.
    The domain is ``[-h_init, inf)``.
    """
    lots = list(lots)
    total = sum(lot.weight for lot in lots)
    if abs(total - h_init) > 1e-9:
        raise LotMismatch(f"lot weights sum to {total}, holding is {h_init}")
    if order not in LOT_ORDERS:
        raise InvalidInput(f"lot order must be one of {LOT_ORDERS}")
    if order == "hifo":
        lots = sorted(lots, key=lambda lot: -lot.basis_fraction)
    pieces = [QuadPiece(0, 0, 0, 0, INF)]
    right, value = 0.0, 0.0  # liability is `value` at u = -right
    for lot in lots:
        if lot.weight == 0:
            continue
        slope = lot.rate * (1.0 - lot.basis_fraction)  # liability per unit sold
        left = right + lot.weight
        # on u in [-left, -right]: value + slope * (-right - u)
        pieces.append(QuadPiece(0, -slope, value - slope * right, -left, -right))
        value += slope * lot.weight
        right = left
    if right > 0:
        # close the domain exactly at -h_init
        last = pieces[-1]
        pieces[-1] = last.restrict(-h_init, last.b)
    return PiecewiseQuadratic(pieces)


def position_limits(h_lb: float, h_ub: float) -> PiecewiseQuadratic:
    if h_lb > h_ub:
        raise EmptyDomain(f"position limits are contradictory: [{h_lb}, {h_ub}]")
    return PiecewiseQuadratic.indicator(h_lb, h_ub)


def min_holding_size(h_min: float, lo: float = -INF, hi: float = INF) -> PiecewiseQuadratic:
    """Indicator of ``{0} union {|h| >= h_min}`` within ``[lo, hi]``."""
    return min_trade_size(h_min, lo, hi)


def integer_shares(price: float, h_ub: float, h_lb: float = 0.0) -> PiecewiseQuadratic:
    """Indicator of holdings that are whole multiples of ``price`` in ``[h_lb, h_ub]``."""
    if not (math.isfinite(h_ub) and math.isfinite(h_lb)):
        raise UnboundedInteger("integer share constraint needs finite position bounds")
    if not price > 0:
        raise InvalidInput("share price must be positive")
    j = np.arange(math.ceil(h_lb / price - 1e-12), math.floor(h_ub / price + 1e-12) + 1)
    if len(j) == 0:
        raise InvalidInput("no whole share count fits the position bounds")
    return PiecewiseQuadratic.points(j * price)


# ---------------------------------------------------------------------
# portfolio definition

@dataclass
class PortfolioSpec:
    X: np.ndarray  # l x k factor exposures
    Sigma: np.ndarray  # k x k factor covariance
    D_idio: np.ndarray  # idiosyncratic variances
    h_init: np.ndarray
    h_bm: np.ndarray
    alpha: Optional[np.ndarray] = None  # None: track the benchmark
    gamma_risk: float = 100.0
    gamma_trd: float = 1.0
    gamma_hld: float = 1.0
    gamma_sprd: float = 1.0
    gamma_tax: float = 1.0
    eta_lb: float = 0.98
    eta_ub: float = 0.99
    spread: Optional[np.ndarray] = None  # half spreads
    c_trd: Optional[np.ndarray] = None
    c_hld: Optional[np.ndarray] = None
    h_lb: Optional[np.ndarray] = None
    h_ub: Optional[np.ndarray] = None
    lots: Optional[list] = None  # per asset, a list of TaxLot
    lot_order: str = "hifo"
    impact: Optional[np.ndarray] = None
    impact_umax: float = 0.1
    impact_segments: int = 16
    min_trade: Optional[np.ndarray] = None
    h_min: Optional[np.ndarray] = None
    prices: Optional[np.ndarray] = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        l, k = self.X.shape
        for name in ("D_idio", "h_init", "h_bm", "alpha", "spread", "c_trd", "c_hld",
                     "h_lb", "h_ub", "impact", "min_trade", "h_min", "prices"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float) * np.ones(l)
            setattr(self, name, v)
        if self.Sigma.shape != (k, k):
            raise InvalidInput(f"Sigma must be {k} x {k}")
        if np.any(self.D_idio <= 0):
            raise InvalidInput("idiosyncratic variances must be positive")
        if self.eta_lb > self.eta_ub:
            raise InvalidInput("eta_lb must not exceed eta_ub")
        for name in ("gamma_risk", "gamma_trd", "gamma_hld", "gamma_sprd", "gamma_tax"):
            if getattr(self, name) < 0:
                raise InvalidInput(f"{name} must be nonnegative")
        if self.lots is not None and len(self.lots) != l:
            raise InvalidInput("lots must hold one list per asset")

    @property
    def l(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def risk_factor(self) -> np.ndarray:
        """``C^T X^T`` with ``C`` the lower Cholesky factor of ``Sigma``."""
        C = np.linalg.cholesky(self.Sigma)
        return C.T @ self.X.T

    def expected_return(self) -> np.ndarray:
        return benchmark_alpha(self) if self.alpha is None else self.alpha


def benchmark_alpha(spec: PortfolioSpec) -> np.ndarray:
    """Return forecast ``2 g_risk V h_bm`` whose utility tracks the benchmark."""
    Vh = spec.X @ (spec.Sigma @ (spec.X.T @ spec.h_bm)) + spec.D_idio * spec.h_bm
    return 2.0 * spec.gamma_risk * Vh


def trade_cost(spec: PortfolioSpec, i: int) -> PiecewiseQuadratic:
    """``phi_trd_i(u)`` for asset ``i``."""
    terms = []
    if spec.spread is not None:
        terms.append(scale_value(spread_cost(spec.spread[i]), spec.gamma_sprd))
    if spec.impact is not None and spec.impact[i] > 0:
        terms.append(impact_cost_approx(spec.impact[i], spec.impact_umax, spec.impact_segments)[0])
    if spec.c_trd is not None and spec.c_trd[i] > 0:
        terms.append(per_trade_cost(spec.c_trd[i]))
    if spec.lots is not None:
        terms.append(scale_value(tax_liability(spec.lots[i], spec.h_init[i], spec.lot_order), spec.gamma_tax))
    if spec.min_trade is not None and spec.min_trade[i] > 0:
        terms.append(min_trade_size(spec.min_trade[i]))
    out = PiecewiseQuadratic.quadratic()
    for t in terms:
        out = add(out, t)
    return out


def hold_cost(spec: PortfolioSpec, i: int) -> PiecewiseQuadratic:
    """``phi_hld_i(h)`` for asset ``i``."""
    lo = -INF if spec.h_lb is None else spec.h_lb[i]
    hi = INF if spec.h_ub is None else spec.h_ub[i]
    out = position_limits(lo, hi)
    if spec.c_hld is not None and spec.c_hld[i] > 0:
        out = add(out, per_asset_holding_cost(spec.c_hld[i]))
    if spec.h_min is not None and spec.h_min[i] > 0:
        out = add(out, min_holding_size(spec.h_min[i]))
    if spec.prices is not None:
        out = add(out, integer_shares(spec.prices[i], hi, lo))
    return out


@dataclass
class PortfolioLayout:
    l: int
    k: int
    F: np.ndarray  # C^T X^T

    @property
    def h(self) -> slice:
        return slice(0, self.l)

    @property
    def c(self) -> int:
        return self.l

    @property
    def y(self) -> slice:
        return slice(self.l + 1, self.l + 1 + self.k)

    def from_holdings(self, h) -> np.ndarray:
        """``(h, 1 - 1^T h, C^T X^T h)``, which always satisfies the constraints."""
        h = np.asarray(h, dtype=float)
        return np.concatenate([h, [1.0 - h.sum()], self.F @ h])

    def recover(self, x, z) -> np.ndarray:
        # the prox iterate x lies in each holding's domain; rebuild cash and exposures from it
        return self.from_holdings(x[self.h])


def asset_function(spec: PortfolioSpec, i: int, alpha_i: float) -> PiecewiseQuadratic:
    quad = PiecewiseQuadratic.quadratic(spec.gamma_risk * spec.D_idio[i], -alpha_i, 0.0)
    trd = shift_scale_arg(scale_value(trade_cost(spec, i), spec.gamma_trd), 1.0, -spec.h_init[i])
    hld = scale_value(hold_cost(spec, i), spec.gamma_hld)
    return add(add(quad, trd), hld)


def build_sap(spec: PortfolioSpec):
    """Return ``(problem, recover_hook, layout)`` for the negated utility."""
    F = spec.risk_factor()
    l, k = spec.l, spec.k
    alpha = spec.expected_return()
    funcs = [asset_function(spec, i, alpha[i]) for i in range(l)]
    funcs.append(PiecewiseQuadratic.indicator(1.0 - spec.eta_ub, 1.0 - spec.eta_lb))
    funcs.extend(PiecewiseQuadratic.quadratic(spec.gamma_risk) for _ in range(k))
    A = np.zeros((k + 1, l + 1 + k))
    A[:k, :l] = F
    A[:k, l + 1 :] = -np.eye(k)
    A[k, : l + 1] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    layout = PortfolioLayout(l, k, F)
    return SapProblem(A, b, funcs), layout.recover, layout


def default_scaling(spec: PortfolioSpec, e_h: float = 0.1, e_c: float = 0.1,
                    e_y: float = 0.1, d: float = 1.0) -> Scaling:
    """Scaling with one magnitude per variable block (holdings, cash, exposures)
    and one for all constraint rows.

    A variable scale ``e`` acts like a penalty ``1 / e**2`` on that block in
    the augmented Lagrangian.  Row scales do not change the projection, so
    ``d`` only affects conditioning.  The defaults were picked by a small
    runtime search over synthetic instances.
    """
    e = np.concatenate([np.full(spec.l, e_h), [e_c], np.full(spec.k, e_y)])
    return Scaling(np.full(spec.k + 1, d), e)


def utility(spec: PortfolioSpec, h) -> float:
    """The (maximized) utility at ``h``, or ``-inf`` when a cost is infinite or cash is out of range."""
    h = np.asarray(h, dtype=float)
    alpha = spec.expected_return()
    risk = h @ (spec.X @ (spec.Sigma @ (spec.X.T @ h))) + spec.D_idio @ (h * h)
    trd = sum(trade_cost(spec, i)(h[i] - spec.h_init[i]) for i in range(spec.l))
    hld = sum(hold_cost(spec, i)(h[i]) for i in range(spec.l))
    invested = h.sum()
    if not (spec.eta_lb - 1e-12 <= invested <= spec.eta_ub + 1e-12):
        return -INF
    return float(alpha @ h - spec.gamma_risk * risk - spec.gamma_trd * trd - spec.gamma_hld * hld)


# ---------------------------------------------------------------------
# synthetic instances

def synthesize_instance(seed: int, l: int, k: int, lots_per_asset: int = 3) -> PortfolioSpec:
    """A reproducible random benchmark-tracking instance.

    Variances are annualized; the tradeoffs, fixed costs and invested-
    fraction bounds are set to values typical for a small tax-aware account.
    """
    if l < 1 or k < 1:
        raise InvalidInput("need at least one asset and one factor")
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 0.5, size=(l, k))
    X[:, 0] = rng.normal(1.0, 0.3, size=l)  # market factor
    G = rng.normal(size=(k, k)) / math.sqrt(k)
    vols = np.concatenate([[0.16], rng.uniform(0.02, 0.06, size=k - 1)])
    corr = G @ G.T + np.eye(k)
    dscale = 1.0 / np.sqrt(np.diag(corr))
    Sigma = (dscale[:, None] * corr * dscale[None, :]) * np.outer(vols, vols)
    D_idio = rng.uniform(0.2, 0.4, size=l) ** 2

    h_bm = rng.lognormal(0.0, 1.0, size=l)
    h_bm /= h_bm.sum()
    held = rng.random(l) < 0.6
    held[np.argmax(h_bm)] = True
    h_init = np.where(held, h_bm * rng.lognormal(0.0, 0.5, size=l), 0.0)
    h_init *= 0.985 / h_init.sum()

    lots = []
    for i in range(l):
        if h_init[i] == 0:
            lots.append([])
            continue
        w = rng.dirichlet(np.ones(lots_per_asset)) * h_init[i]
        w[-1] = h_init[i] - w[:-1].sum()
        basis = rng.uniform(0.5, 1.4, size=lots_per_asset)
        rate = np.where(rng.random(lots_per_asset) < 0.7, 0.2, 0.35)
        lots.append([TaxLot(float(a), float(bf), float(r)) for a, bf, r in zip(w, basis, rate)])

    return PortfolioSpec(
        X=X,
        Sigma=Sigma,
        D_idio=D_idio,
        h_init=h_init,
        h_bm=h_bm,
        alpha=None,
        gamma_risk=100.0,
        gamma_trd=1.0,
        gamma_hld=1.0,
        gamma_sprd=1.0,
        gamma_tax=1.0,
        eta_lb=0.98,
        eta_ub=0.99,
        spread=rng.uniform(1e-4, 1e-3, size=l),
        c_trd=np.full(l, 3e-5),
        c_hld=np.full(l, 3e-5),
        h_lb=np.zeros(l),
        h_ub=np.maximum(3.0 * h_bm, h_init),
        lots=lots,
    )


# ---------------------------------------------------------------------
# serialization

_ARRAYS = ("X", "Sigma", "D_idio", "h_init", "h_bm", "alpha", "spread", "c_trd", "c_hld",
           "h_lb", "h_ub", "impact", "min_trade", "h_min", "prices")
_SCALARS = ("gamma_risk", "gamma_trd", "gamma_hld", "gamma_sprd", "gamma_tax", "eta_lb",
            "eta_ub", "impact_umax")


def spec_to_dict(spec: PortfolioSpec) -> dict:
    out = {"format": "portfolio/1"}
    for name in _ARRAYS:
        v = getattr(spec, name)
        out[name] = None if v is None else np.asarray(v).tolist()
    for name in _SCALARS:
        out[name] = float(getattr(spec, name))
    out["impact_segments"] = int(spec.impact_segments)
    out["lot_order"] = spec.lot_order
    out["lots"] = None if spec.lots is None else [
        [{"weight": t.weight, "basis_fraction": t.basis_fraction, "rate": t.rate} for t in asset]
        for asset in spec.lots
    ]
    return out


def spec_from_dict(data: dict) -> PortfolioSpec:
    if data.get("format") != "portfolio/1":
        raise InvalidInput("portfolio file must have format 'portfolio/1'")
    kwargs = {}
    for name in _ARRAYS + _SCALARS + ("impact_segments", "lot_order"):
        if data.get(name) is not None:
            kwargs[name] = data[name]
    for name in ("X", "Sigma", "D_idio", "h_init", "h_bm"):
        if name not in kwargs:
            raise InvalidInput(f"portfolio file is missing field '{name}'")
    if data.get("lots") is not None:
        kwargs["lots"] = [[TaxLot(**lot) for lot in asset] for asset in data["lots"]]
    return PortfolioSpec(**kwargs)
