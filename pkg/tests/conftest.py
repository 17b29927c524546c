import numpy as np
import pytest

from sapadmm.pwq import INF, PiecewiseQuadratic, QuadPiece

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def random_pwq(rng, max_pieces=6, lo=-5.0, hi=5.0, convex_only=False, points=True):
    """Random bounded PWQ mixing convex, concave, touching, gapped and point pieces."""
    k = int(rng.integers(1, max_pieces + 1))
    cuts = np.sort(rng.uniform(lo, hi, size=2 * k))
    pieces = []
    for j in range(k):
        a, b = cuts[2 * j], cuts[2 * j + 1]
        if j > 0 and rng.random() < 0.5:
            a = pieces[-1].b
        kind = rng.random()
        if points and kind < 0.15:
            pieces.append(QuadPiece(0, 0, rng.uniform(-3, 3), a, a))
            continue
        p = rng.uniform(0, 2) if (convex_only or kind < 0.7) else rng.uniform(-2, 0)
        pieces.append(QuadPiece(p, rng.uniform(-3, 3), rng.uniform(-3, 3), a, max(a, b)))
    return PiecewiseQuadratic(pieces)


def random_convex_pwq(rng, max_pieces=5, lo=-5.0, hi=5.0):
    """Continuous convex PWQ: integrate a nondecreasing piecewise-affine slope."""
    k = int(rng.integers(1, max_pieces + 1))
    edges = np.sort(rng.uniform(lo, hi, size=k + 1))
    if rng.random() < 0.3:
        edges[0] = -INF
    if rng.random() < 0.3:
        edges[-1] = INF
    pieces = []
    slope_floor = rng.uniform(-3, 0)
    value = rng.uniform(-2, 2)
    for j in range(k):
        a, b = edges[j], edges[j + 1]
        p = rng.uniform(0.1, 2) if (np.isinf(a) or np.isinf(b)) else rng.uniform(0, 2)
        if j == 0:
            # anchor at a finite reference point
            ref = b if np.isfinite(b) else (a if np.isfinite(a) else 0.0)
            q = slope_floor - 2 * p * ref
            r = value - (p * ref + q) * ref
        else:
            prev = pieces[-1]
            s_left = prev.slope(a) + rng.uniform(0, 1)
            q = s_left - 2 * p * a
            r = prev.value(a) - (p * a + q) * a
        pieces.append(QuadPiece(p, q, r, a, b))
    return PiecewiseQuadratic(pieces)


def card_cost(c, lo=-INF, hi=INF):
    return PiecewiseQuadratic(
        [QuadPiece(0, 0, c, lo, 0), QuadPiece(0, 0, 0, 0, 0), QuadPiece(0, 0, c, 0, hi)]
    )


def example_function():
    """The five-piece nonconvex test function with a discontinuity at 7.5."""
    return PiecewiseQuadratic(
        [
            QuadPiece(1, -3, -3, -INF, 3),
            QuadPiece(0, -1, 3, 3, 4),
            QuadPiece(2, -20, 47, 4, 6),
            QuadPiece(0, 1, -7, 6, 7.5),
            QuadPiece(0, 4, 29, 7.5, INF),
        ]
    )


def direct_tax(lots, u, order="hifo"):
    """Tax on selling ``-u`` by walking the lots; no piecewise machinery."""
    if u >= 0:
        return 0.0
    if order == "hifo":
        lots = sorted(lots, key=lambda t: -t.basis_fraction)
    left, tax = -u, 0.0
    for lot in lots:
        take = min(left, lot.weight)
        tax += take * lot.rate * (1 - lot.basis_fraction)
        left -= take
    return tax if left <= 1e-12 else INF


def direct_utility(spec, h):
    """Negated objective written straight from the model, with a dense covariance."""
    V = spec.X @ spec.Sigma @ spec.X.T + np.diag(spec.D_idio)
    alpha = 2 * spec.gamma_risk * V @ spec.h_bm if spec.alpha is None else spec.alpha
    u = h - spec.h_init
    trd = 0.0
    hld = 0.0
    for i in range(spec.l):
        trd += spec.gamma_sprd * spec.spread[i] * abs(u[i])
        trd += spec.c_trd[i] * (u[i] != 0)
        trd += spec.gamma_tax * direct_tax(spec.lots[i], u[i], spec.lot_order)
        if not spec.h_lb[i] <= h[i] <= spec.h_ub[i]:
            return -INF
        hld += spec.c_hld[i] * (h[i] != 0)
    return alpha @ h - spec.gamma_risk * h @ V @ h - spec.gamma_trd * trd - spec.gamma_hld * hld


def random_holdings(spec, rng):
    """In-domain holdings mixing exact zeros, untouched positions and free trades."""
    while True:
        h = spec.h_init * rng.lognormal(0, 0.3, spec.l)
        kind = rng.random(spec.l)
        h[kind < 0.2] = 0.0
        keep = (kind >= 0.2) & (kind < 0.4)
        h[keep] = spec.h_init[keep]
        free = ~(kind < 0.4)
        target = rng.uniform(spec.eta_lb, spec.eta_ub)
        slack = target - h[~free].sum()
        if h[free].sum() <= 0 or slack <= 0:
            continue
        h[free] *= slack / h[free].sum()
        if np.all(h <= spec.h_ub) and np.all(h >= spec.h_lb):
            return h


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
