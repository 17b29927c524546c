"""A small nonconvex SAP: ADMM heuristic, relaxation bound and brute-force reference."""

import numpy as np

from sapadmm.admm import point_repair, solve
from sapadmm.oracle import GridSpec, exhaustive
from sapadmm.pwq import PiecewiseQuadratic, QuadPiece
from sapadmm.sap import SapProblem

rng = np.random.default_rng(0)
n, m = 5, 2
A = rng.normal(size=(m, n))
b = A @ rng.uniform(-1, 1, n)


def card_plus_quadratic(c, p, q):
    # fixed cost c for any nonzero value, plus p x^2 + q x, on [-2, 2]
    card = PiecewiseQuadratic([QuadPiece(0, 0, c, -2, 0), QuadPiece(0, 0, 0, 0, 0), QuadPiece(0, 0, c, 0, 2)])
    return card + PiecewiseQuadratic.quadratic(p, q, 0)


f = [card_plus_quadratic(c, p, q) for c, p, q in
     zip(rng.uniform(0.05, 0.5, n), rng.uniform(0.5, 2, n), rng.uniform(-2, 2, n))]
problem = SapProblem(A, b, f)

res = solve(problem)
print(f"z candidate:      o_best {res.o_best:.5f}  d* {res.d_star:.5f}  gap {res.gap:.5f}  "
      f"{res.iterations} iterations")
rep = solve(problem, recover=point_repair(problem))
print(f"repair candidate: o_best {rep.o_best:.5f}  d* {rep.d_star:.5f}  gap {rep.gap:.5f}")

x, v = exhaustive(problem, GridSpec(step=3e-2))
print(f"grid oracle:      {v:.5f}  (lies between d* and o_best up to grid error)")
print("nonzeros in x_best:", int(np.sum(rep.x_best != 0)), "of", n)
