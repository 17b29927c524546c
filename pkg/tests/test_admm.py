import math

import numpy as np
import pytest

from conftest import card_cost
from sapadmm.admm import (
    SolveOptions,
    Tracker,
    admm_step,
    check_termination,
    dist_and_project_domain,
    initialize,
    point_repair,
    solve,
    solve_relaxation,
)
from sapadmm.errors import InvalidInput, NoFeasibleCandidate
from sapadmm.kkt import KktFactor
from sapadmm.pwq import PiecewiseQuadratic, PwqArray, QuadPiece
from sapadmm.sap import SapProblem, Scaling


def convex_qp(rng, m=3, n=8):
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    p = rng.uniform(0.5, 2, n)
    q = rng.normal(size=n)
    f = [PiecewiseQuadratic.quadratic(pi, qi, 0.0) for pi, qi in zip(p, q)]
    return SapProblem(A, b, f), (A, b, p, q)


def kkt_solution(A, b, p, q):
    m, n = A.shape
    K = np.block([[np.diag(2 * p), A.T], [A, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.concatenate([-q, b]))
    x = sol[:n]
    return x, float(np.sum(p * x * x + q * x))


def test_defaults():
    o = SolveOptions()
    assert (o.eps_res, o.eps_obj, o.check_every, o.patience) == (3e-4, 1e-5, 10, 50)
    assert o.init_mode == "relaxation"


@pytest.mark.parametrize(
    "kwargs",
    [{"eps_res": 0.0}, {"eps_obj": -1.0}, {"check_every": 0}, {"patience": 0}, {"max_iter": 0},
     {"init_mode": "bogus"}, {"init_mode": "warm"}],
)
def test_option_validation(kwargs):
    with pytest.raises(InvalidInput):
        SolveOptions(**kwargs)


def test_step_dual_update_identity(rng):
    # lam_{k+1} = lam_k + x - z equals A^T nu from the projection's optimality condition
    A = rng.normal(size=(2, 5))
    b = rng.normal(size=2)
    batch = PwqArray([card_cost(0.3) for _ in range(5)])
    F = KktFactor(A)
    z, lam = rng.normal(size=5), rng.normal(size=5)
    for _ in range(5):
        x, z_next, nu, lam_next = admm_step(batch.prox, F, b, z, lam)
        np.testing.assert_allclose(lam_next, lam + x - z_next, atol=1e-14)
        np.testing.assert_allclose(lam_next, A.T @ nu, atol=1e-8)
        np.testing.assert_allclose(A @ z_next, b, atol=1e-10)
        z, lam = z_next, lam_next


def test_dist_and_project_domain():
    f = PiecewiseQuadratic([QuadPiece(0, 0, 0, 0, 1), QuadPiece(0, 0, 0, 3, 3)])
    assert dist_and_project_domain(f, 2.5) == (3.0, 0.5)
    assert dist_and_project_domain(f, 0.5) == (0.5, 0.0)
    # equidistant between 1 and 3: smaller coordinate wins on a value tie
    assert dist_and_project_domain(f, 2.0) == (1.0, 1.0)


def test_check_termination_rules():
    p = SapProblem(np.ones((1, 2)), [1.0], [PiecewiseQuadratic.quadratic(1)] * 2)
    opts = SolveOptions(patience=20, eps_obj=1e-3)
    t = Tracker()
    stop, rec = check_termination(p, np.array([1.0, 0.0]), 10, t, opts)
    assert not stop and t.o_best == 1.0 and t.last_improvement == 10
    stop, rec = check_termination(p, np.array([0.5, 0.5]), 20, t, opts)
    assert t.o_best == 0.5 and t.last_improvement == 20
    # improvement below eps_obj is kept but does not reset patience
    check_termination(p, np.array([0.5001, 0.4999]), 30, t, opts)
    assert t.last_improvement == 20
    stop, rec = check_termination(p, np.array([0.5, 0.5]), 41, t, opts)
    assert stop
    assert set(rec) == {"iter", "o", "r", "o_best"}


def test_infeasible_candidate_rejected():
    f = [PiecewiseQuadratic.indicator(0, 1), PiecewiseQuadratic.quadratic(1)]
    p = SapProblem(np.ones((1, 2)), [5.0], f)
    t = Tracker()
    stop, rec = check_termination(p, np.array([5.0, 0.0]), 10, t, SolveOptions())
    assert rec["r"] == pytest.approx(4.0)
    assert t.x_best is None and not stop


def test_convex_qp_matches_kkt(rng):
    p, data = convex_qp(rng)
    x_ref, p_ref = kkt_solution(*data)
    res = solve(p, SolveOptions(eps_res=1e-7, eps_obj=1e-10, patience=200))
    assert res.status == "converged"
    assert res.o_best == pytest.approx(p_ref, rel=1e-6, abs=1e-6)
    np.testing.assert_allclose(res.x_best, x_ref, atol=1e-4)
    assert res.d_star <= res.o_best + 1e-6 * (1 + abs(res.o_best))
    assert res.gap >= 0 and res.gap < 1e-4


def test_bound_sandwich_on_card_problem(rng):
    A = np.ones((1, 4))
    f = [card_cost(0.2, -2, 2) + PiecewiseQuadratic.quadratic(1, -2 * t, t * t) for t in (1.0, -0.5, 0.3, 0.8)]
    p = SapProblem(A, [1.0], f)
    res = solve(p)
    assert res.d_star <= res.o_best + 1e-6 * (1 + abs(res.o_best))
    assert p.residual_norm(res.x_best) < 1e-9
    assert np.all(np.isfinite(p.batch.eval(res.x_best)))


def test_no_feasible_candidate_carries_result():
    # integer points cannot sum to 0.5; every candidate is at least 0.25 away
    f = [PiecewiseQuadratic.points([0.0, 1.0]) for _ in range(2)]
    p = SapProblem(np.ones((1, 2)), [0.5], f)
    with pytest.raises(NoFeasibleCandidate) as info:
        solve(p, SolveOptions(init_mode="zeros", max_iter=200))
    res = info.value.result
    assert res.x_best is None and res.iterations == 200
    assert all(rec["r"] >= 0.25 for rec in res.telemetry)


def test_telemetry_callback(rng):
    p, _ = convex_qp(rng)
    seen = []
    res = solve(p, SolveOptions(init_mode="zeros", telemetry=seen.append, check_every=5))
    assert seen == res.telemetry
    assert [r["iter"] for r in seen] == list(range(5, 5 * len(seen) + 1, 5))
    bests = [r["o_best"] for r in seen]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))


def test_parallel_prox_is_identical(rng):
    p, _ = convex_qp(rng, m=2, n=12)
    a = solve(p, SolveOptions(init_mode="zeros"))
    b = solve(p, SolveOptions(init_mode="zeros", parallel_prox=True, workers=3))
    np.testing.assert_array_equal(a.x_best, b.x_best)
    assert a.iterations == b.iterations


def test_scaling_invariance_of_answer(rng):
    p, data = convex_qp(rng)
    _, p_ref = kkt_solution(*data)
    s = Scaling(np.ones(p.m), rng.uniform(0.5, 2, p.n))
    res = solve(p, SolveOptions(scaling=s, eps_res=1e-7, eps_obj=1e-10, patience=300))
    assert res.o_best == pytest.approx(p_ref, rel=1e-5, abs=1e-5)


def test_init_modes(rng):
    p, _ = convex_qp(rng)
    st = initialize(p, SolveOptions(init_mode="zeros"))
    assert np.all(st.z == 0) and st.d_star is None
    st = initialize(p, SolveOptions())
    assert st.d_star is not None and st.relaxation is not None
    warm = SolveOptions(init_mode="warm", warm_start=(st.z, st.lam))
    res = solve(p, warm)
    assert res.d_star is None and res.gap is None
    assert math.isfinite(res.o_best)


def test_solve_relaxation_reports_bound(rng):
    p, data = convex_qp(rng)
    _, p_ref = kkt_solution(*data)
    res = solve_relaxation(p, SolveOptions(eps_res=1e-7, eps_obj=1e-10, patience=200))
    assert res.d_star <= p_ref + 1e-6
    assert res.d_star == pytest.approx(p_ref, abs=1e-4)


def test_point_repair_keeps_points_and_constraints():
    f = [card_cost(0.5, -2, 2), card_cost(0.5, -2, 2), PiecewiseQuadratic.quadratic(1)]
    A = np.array([[1.0, 2.0, 1.0]])
    p = SapProblem(A, [1.0], f)
    hook = point_repair(p)
    x = np.array([0.0, 0.3, 0.2])
    z = np.array([1e-12, 0.3, 0.4 - 1e-12])
    cand = hook(x, z)
    assert cand[0] == 0.0
    assert p.residual_norm(cand) < 1e-12
    # with nothing pinned the z iterate is returned unchanged
    assert hook(np.array([0.1, 0.3, 0.2]), z) is z


def test_point_repair_falls_back_when_infeasible():
    f = [card_cost(0.5, -2, 2), PiecewiseQuadratic.quadratic(1)]
    A = np.array([[1.0, 0.0], [1.0, 1.0]])
    p = SapProblem(A, [1.0, 1.0], f)
    z = np.array([1.0, 0.0])
    # pinning x0 = 0 leaves no way to meet the first row
    assert point_repair(p)(np.array([0.0, 0.5]), z) is z


def test_point_repair_finds_sparse_solutions(rng):
    gaps_z, gaps_r = [], []
    for _ in range(10):
        n = 5
        A = rng.normal(size=(2, n))
        b = A @ rng.uniform(-1, 1, n)
        f = [card_cost(rng.uniform(0.05, 0.5), -2, 2)
             + PiecewiseQuadratic.quadratic(rng.uniform(0.5, 2), rng.uniform(-2, 2), 0) for _ in range(n)]
        p = SapProblem(A, b, f)
        plain = solve(p)
        repaired = solve(p, recover=point_repair(p))
        assert repaired.d_star <= repaired.o_best + 1e-6 * (1 + abs(repaired.o_best))
        gaps_z.append(plain.gap)
        gaps_r.append(repaired.gap)
    assert np.mean(gaps_r) < np.mean(gaps_z)


def test_point_repair_sparse_matrix(rng):
    import scipy.sparse as sp

    f = [card_cost(0.5, -2, 2)] * 2 + [PiecewiseQuadratic.quadratic(1)] * 2
    A = rng.normal(size=(2, 4))
    p = SapProblem(sp.csr_matrix(A), [0.3, -0.2], f)
    cand = point_repair(p)(np.array([0.0, 0.4, 0.1, 0.2]), np.zeros(4))
    assert cand[0] == 0.0
    np.testing.assert_allclose(A @ cand, [0.3, -0.2], atol=1e-10)
