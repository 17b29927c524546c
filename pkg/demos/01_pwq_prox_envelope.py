"""Piecewise quadratics: evaluation, prox and convex envelope of a nonconvex function."""

import numpy as np

from sapadmm.pwq import INF, PiecewiseQuadratic, QuadPiece, envelope, minimize, prox

f = PiecewiseQuadratic(
    [
        QuadPiece(1, -3, -3, -INF, 3),
        QuadPiece(0, -1, 3, 3, 4),
        QuadPiece(2, -20, 47, 4, 6),
        QuadPiece(0, 1, -7, 6, 7.5),
        QuadPiece(0, 4, 29, 7.5, INF),
    ]
)

x_min, f_min = minimize(f)
print(f"minimum {f_min:.4f} at x = {x_min:.4f}")

for u in (-2.0, 2.0, 5.0, 9.0):
    print(f"prox(f, {u:+.1f}) = {prox(f, u):.6f}")

env = envelope(f)
print("envelope pieces (p, q, r, a, b):")
for pc in env.pieces:
    print(f"  {pc.p:8.4f} {pc.q:9.4f} {pc.r:9.4f}  [{pc.a:.5f}, {pc.b:.5f}]")

xs = np.linspace(-2, 10, 7)
print("x        f(x)     env(x)")
for x, a, b in zip(xs, f(xs), env(xs)):
    print(f"{x:6.2f} {a:9.4f} {b:9.4f}")
