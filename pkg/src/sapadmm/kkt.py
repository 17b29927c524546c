"""Cached factorization of the projection system ``[[I, A^T], [A, 0]]``.

Projecting ``v`` onto ``{z : A z = b}`` means solving

    [ I  A^T ] [z]   [v]
    [ A   0  ] [nu] = [b]

once per ADMM iteration with a fixed matrix, so the matrix is factored
once and the factor reused.  A small static regularization ``-reg * I`` on
the lower diagonal block makes the matrix quasi-definite, so rank-deficient
``A`` still factors; iterative refinement against the unregularized
matrix removes the bias it introduces.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, SingularKkt

DEFAULT_REG = 1e-9
REFINE_TOL = 1e-10
MAX_REFINE = 10


def _kkt_matrix(A, reg: float, sparse: bool):
    m, n = A.shape
    if sparse:
        A = sp.csc_matrix(A)
        return sp.bmat(
            [[sp.identity(n, format="csc"), A.T], [A, -reg * sp.identity(m, format="csc")]],
            format="csc",
        )
    K = np.zeros((n + m, n + m))
    K[:n, :n] = np.eye(n)
    K[n:, :n] = A
    K[:n, n:] = A.T
    K[n:, n:] = -reg * np.eye(m)
    return K


class KktFactor:
    """Factor of the projection system for a fixed ``A``; immutable after construction."""

    def __init__(self, A, reg: float = DEFAULT_REG, sparse: bool | None = None):
        if reg < 0:
            raise ValueError("regularization must be nonnegative")
        self.sparse = sp.issparse(A) if sparse is None else sparse
        self.A = sp.csr_matrix(A, dtype=float) if self.sparse else np.asarray(A, dtype=float)
        if self.A.ndim != 2:
            raise DimensionMismatch("A must be a matrix")
        self.m, self.n = self.A.shape
        self.reg = float(reg)
        self._AT = self.A.T.tocsr() if self.sparse else self.A.T
        if self.sparse:
            self._factor_sparse()
        else:
            self._factor_dense()

    def _factor_dense(self):
        if self.reg == 0.0 and self.m > 0:
            # the system is nonsingular exactly when A has full row rank
            sv = np.linalg.svd(self.A, compute_uv=False)
            if sv.size < self.m or sv[-1] <= max(self.A.shape) * np.finfo(float).eps * sv[0]:
                raise SingularKkt("A is rank deficient and regularization is off")
        K = _kkt_matrix(self.A, self.reg, sparse=False)
        ldu, ipiv, info = scipy.linalg.lapack.dsytrf(K, lower=1)
        if info != 0 or not np.all(np.isfinite(ldu)):
            raise SingularKkt(f"symmetric indefinite factorization failed (info={info})")
        self._ldu, self._ipiv = ldu, ipiv

    def _factor_sparse(self):
        K = _kkt_matrix(self.A, self.reg, sparse=True)
        if self.reg > 0.0:
            import qdldl

            try:
                self._solver = qdldl.Solver(K)
            except Exception as exc:  # qdldl reports zero pivots as a generic error
                raise SingularKkt(f"LDL factorization failed: {exc}") from exc
            self._solve_raw = self._solver.solve
        else:
            try:
                lu = spla.splu(K, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularKkt(f"sparse factorization failed: {exc}") from exc
            udiag = np.abs(lu.U.diagonal())
            if udiag.size and udiag.min() <= K.shape[0] * np.finfo(float).eps * udiag.max():
                raise SingularKkt("A is rank deficient and regularization is off")
            self._solve_raw = lu.solve

    def _solve_once(self, rhs):
        if self.sparse:
            return np.asarray(self._solve_raw(rhs), dtype=float)
        x, info = scipy.linalg.lapack.dsytrs(self._ldu, self._ipiv, rhs[:, None], lower=1)
        return x[:, 0]

    def _apply(self, z, nu):
        """Unregularized KKT matrix times ``(z, nu)``."""
        return np.concatenate([z + self._AT @ nu, self.A @ z])

    def solve(self, v, b):
        """Return ``(z, nu)`` solving the projection system with right-hand side ``(v, b)``."""
        v = np.asarray(v, dtype=float)
        b = np.asarray(b, dtype=float)
        if v.shape != (self.n,) or b.shape != (self.m,):
            raise DimensionMismatch(f"expected v of length {self.n} and b of length {self.m}")
        rhs = np.concatenate([v, b])
        sol = self._solve_once(rhs)
        tol = REFINE_TOL * (1.0 + np.linalg.norm(v) + np.linalg.norm(b))
        for _ in range(MAX_REFINE):
            res = rhs - self._apply(sol[: self.n], sol[self.n :])
            if np.linalg.norm(res) <= tol:
                break
            sol = sol + self._solve_once(res)
        return sol[: self.n], sol[self.n :]


def factor(A, reg: float = DEFAULT_REG, sparse: bool | None = None) -> KktFactor:
    return KktFactor(A, reg=reg, sparse=sparse)


def project_affine(F: KktFactor, v, b) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{z : A z = b}``."""
    return F.solve(v, b)[0]
