import numpy as np
import pytest

from sapadmm.admm import SolveOptions, solve
from sapadmm.errors import EmptyDomain, InvalidInput, LotMismatch, UnboundedInteger
from sapadmm.portfolio import (
    PortfolioSpec,
    TaxLot,
    benchmark_alpha,
    build_sap,
    default_scaling,
    impact_cost_approx,
    integer_shares,
    min_trade_size,
    per_trade_cost,
    position_limits,
    spec_from_dict,
    spec_to_dict,
    spread_cost,
    synthesize_instance,
    tax_liability,
    utility,
)
from conftest import direct_tax, direct_utility, random_holdings
from sapadmm.pwq import INF, is_convex


def test_spread_and_fixed_costs():
    f = spread_cost(0.01)
    assert f(-2.0) == pytest.approx(0.02) and f(3.0) == pytest.approx(0.03)
    g = per_trade_cost(0.5)
    assert g(0.0) == 0.0 and g(1e-9) == 0.5 and g(-3.0) == 0.5


def test_tax_liability_hand_values():
    lots = [TaxLot(0.1, 0.5, 0.2), TaxLot(0.1, 1.2, 0.2)]
    f = tax_liability(lots, 0.2, "hifo")
    # the loss lot goes first: -0.04 per unit, then +0.1 per unit
    assert f(0.05) == 0.0
    assert f(-0.1) == pytest.approx(-0.004)
    assert f(-0.2) == pytest.approx(0.006)
    assert f(-0.25) == INF
    g = tax_liability(lots, 0.2, "fifo")
    assert g(-0.1) == pytest.approx(0.01)
    for u in np.linspace(-0.2, 0.1, 31):
        assert f(u) == pytest.approx(direct_tax(lots, u, "hifo"), abs=1e-15)
        assert g(u) == pytest.approx(direct_tax(lots, u, "fifo"), abs=1e-15)


def test_tax_liability_errors():
    with pytest.raises(LotMismatch):
        tax_liability([TaxLot(0.1, 1.0, 0.2)], 0.3)
    with pytest.raises(InvalidInput):
        tax_liability([TaxLot(0.1, 1.0, 0.2)], 0.1, order="lifo")
    with pytest.raises(InvalidInput):
        TaxLot(-1.0, 1.0, 0.2)


def test_position_and_size_constraints():
    with pytest.raises(EmptyDomain):
        position_limits(1.0, 0.0)
    f = min_trade_size(0.1, -1, 1)
    assert f(0.0) == 0.0 and f(0.05) == INF and f(-0.5) == 0.0
    g = integer_shares(0.25, 1.0)
    np.testing.assert_array_equal(g(np.array([0.0, 0.25, 1.0])), 0.0)
    assert g(0.3) == INF
    with pytest.raises(UnboundedInteger):
        integer_shares(0.25, INF)


def test_impact_approximation():
    f, err = impact_cost_approx(0.5, 0.1, 16)
    assert is_convex(f)
    assert err < 0.02
    us = np.linspace(-0.1, 0.1, 201)
    # the reported error is a sampled maximum; allow 1% on top of it
    np.testing.assert_allclose(f(us), 0.5 * np.abs(us) ** 1.5, atol=1.01 * err * 0.5 * 0.1**1.5)
    # more segments, smaller error
    assert impact_cost_approx(0.5, 0.1, 64)[1] < err


def test_build_sap_structure():
    spec = synthesize_instance(0, 12, 3)
    p, recover, layout = build_sap(spec)
    assert (p.m, p.n) == (spec.k + 1, spec.l + 1 + spec.k)
    h = random_holdings(spec, np.random.default_rng(1))
    x = recover(np.concatenate([h, np.zeros(1 + spec.k)]), None)
    assert p.residual_norm(x) < 1e-15
    F = spec.risk_factor()
    # the exposures reproduce the factor risk exactly
    assert x[layout.y] @ x[layout.y] == pytest.approx(h @ spec.X @ spec.Sigma @ spec.X.T @ h, rel=1e-12)
    np.testing.assert_allclose(F.T @ F, spec.X @ spec.Sigma @ spec.X.T, atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_objective_identity(seed):
    spec = synthesize_instance(seed, 15, 4)
    p, _, layout = build_sap(spec)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        h = random_holdings(spec, rng)
        x = layout.from_holdings(h)
        ref = direct_utility(spec, h)
        assert -p.objective(x) == pytest.approx(ref, rel=1e-8, abs=1e-14)
        assert utility(spec, h) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_out_of_domain_is_infinite():
    spec = synthesize_instance(3, 10, 2)
    p, _, layout = build_sap(spec)
    h = spec.h_init.copy()
    i = int(np.argmax(spec.h_init))
    h[i] = -0.01
    assert p.objective(layout.from_holdings(h)) == INF
    assert utility(spec, h) == -INF


def test_benchmark_tracking_without_costs():
    rng = np.random.default_rng(7)
    l, k = 6, 2
    X = rng.normal(size=(l, k))
    h_bm = rng.dirichlet(np.ones(l))
    spec = PortfolioSpec(X=X, Sigma=np.diag([0.04, 0.01]), D_idio=np.full(l, 0.05), h_init=np.zeros(l),
                         h_bm=h_bm, eta_lb=0.0, eta_ub=2.0)
    np.testing.assert_allclose(benchmark_alpha(spec),
                               2 * spec.gamma_risk * (X @ spec.Sigma @ X.T + 0.05 * np.eye(l)) @ h_bm)
    p, recover, layout = build_sap(spec)
    res = solve(p, SolveOptions(eps_res=1e-8, eps_obj=1e-12, patience=300), recover=recover)
    np.testing.assert_allclose(res.x_best[layout.h], h_bm, atol=1e-4)


def test_spec_round_trip():
    spec = synthesize_instance(5, 8, 3)
    back = spec_from_dict(spec_to_dict(spec))
    np.testing.assert_array_equal(back.X, spec.X)
    assert back.lots == spec.lots
    p1, _, _ = build_sap(spec)
    p2, _, _ = build_sap(back)
    h = spec.h_init
    assert p1.objective(np.concatenate([h, [1 - h.sum()], spec.risk_factor() @ h])) == pytest.approx(
        p2.objective(np.concatenate([h, [1 - h.sum()], back.risk_factor() @ h])))


def test_spec_validation():
    with pytest.raises(InvalidInput):
        spec_from_dict({"format": "other"})
    with pytest.raises(InvalidInput):
        PortfolioSpec(X=np.ones((2, 1)), Sigma=np.eye(1), D_idio=[0.1, -0.1], h_init=[0, 0], h_bm=[0.5, 0.5])
    with pytest.raises(InvalidInput):
        PortfolioSpec(X=np.ones((2, 1)), Sigma=np.eye(1), D_idio=[0.1, 0.1], h_init=[0, 0], h_bm=[0.5, 0.5],
                      eta_lb=0.9, eta_ub=0.8)


def test_small_rebalance_solves():
    spec = synthesize_instance(11, 40, 5)
    p, recover, layout = build_sap(spec)
    res = solve(p, SolveOptions(scaling=default_scaling(spec)), recover=recover)
    assert res.status == "converged"
    assert res.gap >= 0
    h = res.x_best[layout.h]
    # candidates are accepted within eps_res of the domain
    assert spec.eta_lb - 3e-4 <= h.sum() <= spec.eta_ub + 3e-4
    assert -res.o_best == pytest.approx(direct_utility(spec, h), rel=1e-8)
