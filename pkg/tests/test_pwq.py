import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import card_cost, example_function, random_convex_pwq, random_pwq
from sapadmm.errors import EmptyDomain, InvalidInput, NotConvex, Unbounded
from sapadmm.oracle import prox_oracle
from sapadmm.pwq import (
    INF,
    PiecewiseQuadratic,
    PwqArray,
    QuadPiece,
    add,
    evaluate,
    is_convex,
    minimize,
    prox,
    prox_convex,
    prox_thresholds,
    scale_value,
    shift_scale_arg,
)

seeds = st.integers(0, 2**32 - 1)


def test_min_convention_at_shared_point():
    f = PiecewiseQuadratic([QuadPiece(0, 0, 1, 0, 1), QuadPiece(0, 0, 0, 1, 2)])
    assert f(1.0) == 0.0
    assert f(0.5) == 1.0
    assert f(2.5) == INF


def test_point_piece_and_gap():
    f = PiecewiseQuadratic([QuadPiece(0, 0, 2, -1, 0), QuadPiece(0, 0, -1, 3, 3)])
    assert f(3.0) == -1.0
    assert f(1.0) == INF
    assert f.domain_intervals() == [(-1.0, 0.0), (3.0, 3.0)]


def test_invalid_pieces_rejected():
    with pytest.raises((InvalidInput, EmptyDomain)):
        PiecewiseQuadratic([QuadPiece(0, 0, 0, 2, 1)])
    with pytest.raises((InvalidInput, EmptyDomain)):
        PiecewiseQuadratic([])
    with pytest.raises(InvalidInput):
        PiecewiseQuadratic([QuadPiece(float("nan"), 0, 0, 0, 1)])


def test_list_round_trip():
    f = example_function()
    g = PiecewiseQuadratic.from_list(f.to_list())
    assert g.pieces == f.pieces
    assert f.to_list()[0]["a"] == "-inf"


def test_example_minimum():
    x, v = minimize(example_function())
    assert x == pytest.approx(1.5)
    assert v == pytest.approx(-5.25)


def test_minimize_unbounded():
    with pytest.raises(Unbounded):
        minimize(PiecewiseQuadratic.quadratic(0, -1, 0, 0, INF))


def test_prox_ties_prefer_nearest_to_u():
    # two zero-cost points equidistant from u: both have prox objective 1/2
    f = PiecewiseQuadratic.points([-1.0, 1.0])
    assert prox(f, 0.0) == -1.0
    assert prox(f, 0.1) == 1.0


def test_prox_card_cost():
    f = card_cost(0.5)
    # hard threshold at sqrt(2 c) = 1
    assert prox(f, 0.9) == 0.0
    assert prox(f, 1.1) == pytest.approx(1.1)


def test_prox_convex_worked_example():
    f = PiecewiseQuadratic([QuadPiece(0, -1, 0, 0, 1), QuadPiece(1, -1, -1, 1, 2)])
    assert is_convex(f)
    assert prox_thresholds(f) == [-1.0, 0.0, 2.0, 5.0]
    assert prox_convex(f, 1.2) == 1.0
    assert prox_convex(f, -0.5) == pytest.approx(0.5)
    assert prox_convex(f, 3.5) == pytest.approx(1.5)
    assert prox_convex(f, 9.0) == 2.0
    assert prox_convex(f, -3.0) == 0.0


def test_prox_convex_rejects_nonconvex():
    with pytest.raises(NotConvex):
        prox_convex(card_cost(1.0), 0.0)


def test_is_convex_cases():
    assert is_convex(PiecewiseQuadratic.quadratic(1, 0, 0))
    assert not is_convex(PiecewiseQuadratic.quadratic(-1, 0, 0, 0, 1))
    assert not is_convex(example_function())
    assert not is_convex(card_cost(1.0))
    # upward jump breaks convexity as well
    assert not is_convex(PiecewiseQuadratic([QuadPiece(0, 0, 0, 0, 1), QuadPiece(0, 0, 1, 1, 2)]))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_add_is_pointwise_sum(seed):
    rng = np.random.default_rng(seed)
    f = random_pwq(rng)
    g = random_pwq(rng)
    xs = np.concatenate([rng.uniform(-6, 6, 200), f.breakpoints(), g.breakpoints()])
    try:
        h = add(f, g)
    except EmptyDomain:
        assert np.all(np.isinf(f(xs) + g(xs)))
        return
    np.testing.assert_allclose(h(xs), f(xs) + g(xs), rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.1, 5), st.floats(-3, 3), st.floats(0, 4))
def test_argument_and_value_scaling(seed, e, s, k):
    rng = np.random.default_rng(seed)
    f = random_pwq(rng)
    g = shift_scale_arg(f, e, s)
    ys = rng.uniform(-6, 6, 200)
    np.testing.assert_allclose(g(ys), f(e * ys + s), rtol=1e-9, atol=1e-9)
    h = scale_value(f, k)
    xs = rng.uniform(-6, 6, 200)
    fx = f(xs)
    ok = np.isfinite(fx)
    np.testing.assert_allclose(h(xs)[ok], k * fx[ok], rtol=1e-12, atol=1e-12)
    assert np.all(np.isinf(h(xs)[~ok]))


@settings(max_examples=80, deadline=None)
@given(seeds, st.floats(-8, 8))
def test_prox_is_global_minimizer(seed, u):
    f = random_pwq(np.random.default_rng(seed))
    x = prox(f, u)
    obj = float(f(x)) + 0.5 * (x - u) ** 2
    _, grid_obj = prox_oracle(f, u, step=1e-3)
    assert obj <= grid_obj + 1e-9


@settings(max_examples=80, deadline=None)
@given(seeds, st.floats(-8, 8))
def test_prox_convex_matches_prox(seed, u):
    f = random_convex_pwq(np.random.default_rng(seed))
    assert prox_convex(f, u) == pytest.approx(prox(f, u), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_prox_convex_is_monotone(seed):
    f = random_convex_pwq(np.random.default_rng(seed))
    us = np.linspace(-10, 10, 101)
    xs = [prox_convex(f, u) for u in us]
    assert np.all(np.diff(xs) >= -1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_batch_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    funcs = [random_pwq(rng) for _ in range(5)]
    arr = PwqArray(funcs)
    u = rng.uniform(-6, 6, 5)
    np.testing.assert_array_equal(arr.prox(u), [prox(f, v) for f, v in zip(funcs, u)])
    np.testing.assert_array_equal(arr.eval(u), [float(evaluate(f, v)) for f, v in zip(funcs, u)])
    proj, dist = arr.project_domain(u)
    for f, v, pj, d in zip(funcs, u, proj, dist):
        assert math.isfinite(float(f(pj)))
        best = min(0.0 if a <= v <= b else min(abs(v - a), abs(v - b)) for a, b in f.domain_intervals())
        assert d == pytest.approx(best, abs=1e-12)
        assert abs(pj - v) == pytest.approx(d, abs=1e-12)


def test_min_linear():
    arr = PwqArray([PiecewiseQuadratic.quadratic(1, 0, 0), PiecewiseQuadratic.indicator(0, INF)])
    v = arr.min_linear(np.array([2.0, -1.0]))
    # min x^2 - 2x = -1; min over x >= 0 of x = 0
    np.testing.assert_allclose(v, [-1.0, 0.0])
    assert arr.min_linear(np.array([0.0, 1.0]))[1] == -INF
