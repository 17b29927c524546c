"""Separable-affine problems: minimize sum_i f_i(x_i) subject to A x = b."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyDomain, InvalidInput, Unbounded
from .pwq import INF, PiecewiseQuadratic, PwqArray, QuadPiece, envelope, shift_scale_arg


def _as_matrix(A):
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise DimensionMismatch("A must be a 2-D matrix")
    return A


class SapProblem:
    """Data ``(A, b, f)`` of a separable-affine problem.

    ``A`` may be a dense array or any scipy sparse matrix; ``f`` is a
    sequence of :class:`PiecewiseQuadratic`, one per column of ``A``.
    """

    def __init__(self, A, b, f: Sequence[PiecewiseQuadratic]):
        self.A = _as_matrix(A)
        self.b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
        funcs = []
        for i, fi in enumerate(f):
            if isinstance(fi, PiecewiseQuadratic):
                funcs.append(fi)
                continue
            try:
                funcs.append(PiecewiseQuadratic(fi))
            except EmptyDomain as exc:
                raise EmptyDomain(index=i) from exc
        self.f = tuple(funcs)
        m, n = self.A.shape
        if n != len(self.f):
            raise DimensionMismatch(f"A has {n} columns but {len(self.f)} functions were given")
        if m != len(self.b):
            raise DimensionMismatch(f"A has {m} rows but b has length {len(self.b)}")
        if not np.all(np.isfinite(self.b)):
            raise InvalidInput("b must be finite")
        self._batch = None

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    @property
    def batch(self) -> PwqArray:
        if self._batch is None:
            self._batch = PwqArray(self.f)
        return self._batch

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if self.is_sparse else self.A

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def objective(self, x) -> float:
        return float(np.sum(self.batch.eval(np.asarray(x, dtype=float))))

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.residual(x)))


def new_problem(A, b, f) -> SapProblem:
    return SapProblem(A, b, f)


def objective(p: SapProblem, x) -> float:
    return p.objective(x)


def residual_norm(p: SapProblem, x) -> float:
    return p.residual_norm(x)


@dataclass(frozen=True)
class Scaling:
    """Diagonal scalings: ``d`` for constraint rows, ``e`` for variables."""

    d: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float)).ravel()
        e = np.atleast_1d(np.asarray(self.e, dtype=float)).ravel()
        for name, v in (("d", d), ("e", e)):
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise InvalidInput(f"scaling vector {name} must be positive and finite")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "e", e)

    @classmethod
    def identity(cls, m: int, n: int) -> "Scaling":
        return cls(np.ones(m), np.ones(n))

    def check(self, p: SapProblem):
        if len(self.d) != p.m or len(self.e) != p.n:
            raise DimensionMismatch(
                f"scaling has sizes ({len(self.d)}, {len(self.e)}), problem needs ({p.m}, {p.n})"
            )


def scale(p: SapProblem, s: Scaling) -> SapProblem:
    """The problem in the variable ``x_tilde = x / e`` with rows multiplied by ``d``."""
    s.check(p)
    if p.is_sparse:
        A = sp.diags(s.d) @ p.A @ sp.diags(s.e)
    else:
        A = (s.d[:, None] * p.A) * s.e[None, :]
    funcs = [fi if ei == 1.0 else shift_scale_arg(fi, ei, 0.0) for fi, ei in zip(p.f, s.e)]
    return SapProblem(A, s.d * p.b, funcs)


def unscale(x_tilde, s: Scaling) -> np.ndarray:
    return s.e * np.asarray(x_tilde, dtype=float)


def equilibrate(A, iters: int = 10) -> Scaling:
    """Ruiz equilibration: scalings that drive row and column inf-norms of DAE toward one."""
    M = sp.csr_matrix(A, dtype=float) if sp.issparse(A) else sp.csr_matrix(np.asarray(A, float))
    m, n = M.shape
    d, e = np.ones(m), np.ones(n)
    for _ in range(iters):
        S = sp.diags(d) @ M @ sp.diags(e)
        absS = abs(S)
        rows = np.asarray(absS.max(axis=1).todense()).ravel()
        cols = np.asarray(absS.max(axis=0).todense()).ravel()
        rows[rows == 0] = 1.0
        cols[cols == 0] = 1.0
        d /= np.sqrt(rows)
        e /= np.sqrt(cols)
    return Scaling(d, e)


def relax(p: SapProblem) -> SapProblem:
    """The same constraints with every f_i replaced by its convex envelope."""
    funcs = []
    for i, fi in enumerate(p.f):
        try:
            funcs.append(envelope(fi))
        except Unbounded as exc:
            raise Unbounded(index=i) from exc
    return SapProblem(p.A, p.b, funcs)


def lp_adapter(c, A, b) -> SapProblem:
    """Standard-form LP ``min c^T x, Ax = b, x >= 0`` as a separable-affine problem."""
    c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
    funcs = [PiecewiseQuadratic([QuadPiece(0.0, ci, 0.0, 0.0, INF)]) for ci in c]
    return SapProblem(A, b, funcs)


def _interval_range(F, lo, hi):
    """Bounds of ``F^T x`` over the box ``lo <= x <= hi`` (entries may be infinite)."""
    Ft = F.T
    with np.errstate(invalid="ignore"):
        pos = np.where(Ft > 0, Ft * hi, 0.0) + np.where(Ft < 0, Ft * lo, 0.0)
        neg = np.where(Ft > 0, Ft * lo, 0.0) + np.where(Ft < 0, Ft * hi, 0.0)
    return np.nan_to_num(neg.sum(axis=1), nan=-INF), np.nan_to_num(pos.sum(axis=1), nan=INF)


def iqp_adapter(P, q, A, b, x_bounds=None) -> SapProblem:
    """Indefinite QP ``min x^T P x + q^T x, Ax = b, x >= 0`` lifted to a separable-affine problem.

    With ``P = F diag(lam) F^T`` the lifted variable is ``(x, z)`` with
    ``z = F^T x`` and separable terms ``q_i x_i`` on ``x_i >= 0`` and
    ``lam_j z_j^2``.  Negative eigenvalues make the ``z`` terms concave,
    which is only bounded below on a bounded interval, so optional
    ``x_bounds = (lo, hi)`` boxes are propagated to the ``z`` components.
    """
    P = np.asarray(P, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float)).ravel()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
    n = len(q)
    if P.shape != (n, n):
        raise DimensionMismatch("P must be n x n")
    if not np.allclose(P, P.T, rtol=1e-12, atol=1e-12 * (1 + np.abs(P).max())):
        raise InvalidInput("P must be symmetric")
    lo = np.zeros(n) if x_bounds is None else np.maximum(0.0, np.asarray(x_bounds[0], float))
    hi = np.full(n, INF) if x_bounds is None else np.asarray(x_bounds[1], float) * np.ones(n)
    xs = [PiecewiseQuadratic([QuadPiece(0.0, q[i], 0.0, lo[i], hi[i])]) for i in range(n)]
    lam, V = np.linalg.eigh(0.5 * (P + P.T))
    big = np.abs(lam).max() if n else 0.0
    keep = np.abs(lam) > 1e-10 * big if big > 0 else np.zeros(n, bool)
    if not keep.any():
        return SapProblem(A, b, xs)
    lam, F = lam[keep], V[:, keep]
    r = len(lam)
    zlo, zhi = _interval_range(F, lo, hi)
    zs = [PiecewiseQuadratic([QuadPiece(lam[j], 0.0, 0.0, zlo[j], zhi[j])]) for j in range(r)]
    top = np.hstack([A, np.zeros((A.shape[0], r))])
    bottom = np.hstack([F.T, -np.eye(r)])
    return SapProblem(np.vstack([top, bottom]), np.concatenate([b, np.zeros(r)]), xs + zs)
