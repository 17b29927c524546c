"""ADMM heuristic for separable-affine problems.

The iteration works on the scaled problem and alternates

    x <- prox_f(z - lam)            (componentwise)
    z <- project onto {A z = b} of x + lam
    lam <- lam + x - z

Every ``check_every`` iterations a candidate point satisfying ``A x = b``
is formed (the ``z`` iterate, or a problem-specific reconstruction),
projected onto the domain of ``f`` and kept if its distance to the domain
is below ``eps_res`` and its objective beats the best so far.  The run
stops once the best objective has not improved by more than ``eps_obj``
for more than ``patience`` iterations.

Initialization from the convex relaxation also yields a lower bound on
the optimal value.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import InvalidInput, NoFeasibleCandidate
from .kkt import DEFAULT_REG, KktFactor
from .pwq import PiecewiseQuadratic, PwqArray
from .sap import SapProblem, Scaling, relax, scale

INIT_MODES = ("relaxation", "zeros", "warm")

# signature of a candidate hook: (x, z) in original coordinates -> candidate with A x = b
RecoverHook = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class SolveOptions:
    eps_res: float = 3e-4
    eps_obj: float = 1e-5
    check_every: int = 10
    patience: int = 50
    max_iter: int = 10000
    scaling: Optional[Scaling] = None
    init_mode: str = "relaxation"
    # (z0 in original coordinates, lam0 in scaled coordinates) for init_mode="warm"
    warm_start: Optional[tuple] = None
    parallel_prox: bool = False
    workers: Optional[int] = None
    kkt_reg: float = DEFAULT_REG
    telemetry: Optional[Callable[[dict], None]] = None

    def __post_init__(self):
        for name in ("eps_res", "eps_obj"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInput(f"{name} must be positive")
        for name in ("check_every", "patience", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise InvalidInput(f"{name} must be at least 1")
        if self.init_mode not in INIT_MODES:
            raise InvalidInput(f"init_mode must be one of {INIT_MODES}")
        if self.init_mode == "warm" and self.warm_start is None:
            raise InvalidInput("init_mode='warm' needs warm_start=(z0, lam0)")

    def echo(self) -> dict:
        return {
            "eps_res": self.eps_res,
            "eps_obj": self.eps_obj,
            "check_every": self.check_every,
            "patience": self.patience,
            "max_iter": self.max_iter,
            "init_mode": self.init_mode,
            "parallel_prox": self.parallel_prox,
        }


@dataclass
class AdmmState:
    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    iteration: int = 0
    d_star: Optional[float] = None
    relaxation: Optional["SolveResult"] = None


@dataclass
class SolveResult:
    x_best: Optional[np.ndarray]
    o_best: float
    d_star: Optional[float]
    gap: Optional[float]
    residual_at_best: float
    iterations: int
    status: str
    wall_time: float
    z: np.ndarray = None
    lam: np.ndarray = None
    dual_bound: float = -math.inf
    relaxation: Optional["SolveResult"] = None
    telemetry: list = field(default_factory=list)


@dataclass
class Tracker:
    """Best-candidate bookkeeping for the termination rule."""

    o_best: float = math.inf
    x_best: Optional[np.ndarray] = None
    residual_at_best: float = math.inf
    last_improvement: int = 0
    dual_bound: float = -math.inf


def dist_and_project_domain(f: PiecewiseQuadratic, x: float) -> tuple[float, float]:
    """Nearest point of ``dom f`` to ``x`` and its distance."""
    proj, dist = PwqArray([f]).project_domain(np.array([float(x)]))
    return float(proj[0]), float(dist[0])


def check_termination(
    p: SapProblem,
    candidate: np.ndarray,
    k: int,
    tracker: Tracker,
    opts: SolveOptions,
) -> tuple[bool, dict]:
    """Score ``candidate`` (which satisfies ``A x = b``) and decide whether to stop."""
    proj, dist = p.batch.project_domain(candidate)
    r = float(np.linalg.norm(dist))
    o = float(np.sum(p.batch.eval(proj)))
    if r < opts.eps_res and o < tracker.o_best:
        if o < tracker.o_best - opts.eps_obj:
            tracker.last_improvement = k
        tracker.o_best = o
        tracker.x_best = proj
        tracker.residual_at_best = r
    record = {"iter": k, "o": o, "r": r, "o_best": tracker.o_best}
    stop = math.isfinite(tracker.o_best) and k - tracker.last_improvement > opts.patience
    return stop, record


class _Prox:
    def __init__(self, batch: PwqArray, parallel: bool, workers: Optional[int]):
        self.batch = batch
        self.pool = None
        if parallel and len(batch) > 1:
            workers = workers or 4
            bounds = np.linspace(0, len(batch), workers + 1).astype(int)
            self.chunks = [
                (lo, hi, batch.take(np.arange(lo, hi))) for lo, hi in zip(bounds, bounds[1:]) if hi > lo
            ]
            self.pool = ThreadPoolExecutor(max_workers=len(self.chunks))

    def __call__(self, u):
        if self.pool is None:
            return self.batch.prox(u)
        out = np.empty_like(u)

        def run(chunk):
            lo, hi, sub = chunk
            out[lo:hi] = sub.prox(u[lo:hi])

        list(self.pool.map(run, self.chunks))
        return out

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def point_repair(p: SapProblem) -> RecoverHook:
    """Candidate hook that keeps components of ``x`` sitting on isolated points.

    The default candidate ``z`` almost never lands exactly on a point piece
    (a cardinality zero, a whole share count), so discontinuous costs are
    charged even when ``x`` has found the point.  This hook keeps every
    component of the prox iterate ``x`` that equals one of its point pieces
    and restores ``A x = b`` with the minimum-norm change of the others.
    It falls back to ``z`` when that change does not exist.
    """
    A = p.A.tocsc() if p.is_sparse else p.A
    points = [np.array([pc.a for pc in fi.pieces if pc.is_point]) for fi in p.f]
    tol = 1e-9 * (1.0 + np.linalg.norm(p.b))

    def hook(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        pinned = np.array([pts.size > 0 and bool(np.any(xi == pts)) for xi, pts in zip(x, points)])
        free = ~pinned
        if not pinned.any() or not free.any():
            return z
        rhs = p.b - A @ x
        if p.is_sparse:
            d = spla.lsqr(A[:, free], rhs, atol=1e-14, btol=1e-14)[0]
        else:
            d = np.linalg.lstsq(A[:, free], rhs, rcond=None)[0]
        cand = x.copy()
        cand[free] += d
        if np.linalg.norm(A @ cand - p.b) > tol:
            return z
        return cand

    return hook


def admm_step(prox, F: KktFactor, b: np.ndarray, z: np.ndarray, lam: np.ndarray):
    """One iteration on the scaled problem; returns ``(x, z, nu, lam)``."""
    x = prox(z - lam)
    z_next, nu = F.solve(x + lam, b)
    return x, z_next, nu, lam + x - z_next


def _dual_bound(ps: SapProblem, nu: np.ndarray) -> float:
    """Lagrangian lower bound ``inf_x f(x) + nu^T (A x - b)`` for the scaled problem."""
    c = -(ps.A.T @ nu)
    vals = ps.batch.min_linear(c)
    return float(np.sum(vals) - nu @ ps.b)


def _run(
    p: SapProblem,
    opts: SolveOptions,
    s: Scaling,
    z0: np.ndarray,
    lam0: np.ndarray,
    recover: Optional[RecoverHook],
    track_dual: bool,
) -> SolveResult:
    start = time.perf_counter()
    ps = scale(p, s)
    F = KktFactor(ps.A, reg=opts.kkt_reg)
    prox = _Prox(ps.batch, opts.parallel_prox, opts.workers)
    z = np.asarray(z0, dtype=float) / s.e
    lam = np.asarray(lam0, dtype=float).copy()
    nu = np.zeros(ps.m)
    tracker = Tracker()
    telemetry = []
    status = "max_iter"
    k = 0
    try:
        for k in range(1, opts.max_iter + 1):
            x, z, nu, lam = admm_step(prox, F, ps.b, z, lam)
            if k % opts.check_every:
                continue
            xo, zo = s.e * x, s.e * z
            candidate = zo if recover is None else recover(xo, zo)
            stop, record = check_termination(p, candidate, k, tracker, opts)
            if track_dual:
                g = _dual_bound(ps, nu)
                if g > tracker.dual_bound:
                    tracker.dual_bound = g
            telemetry.append(record)
            if opts.telemetry is not None:
                opts.telemetry(record)
            if stop:
                status = "converged"
                break
    finally:
        prox.close()
    if tracker.x_best is None:
        status = "no_feasible_candidate"
    return SolveResult(
        x_best=tracker.x_best,
        o_best=tracker.o_best,
        d_star=None,
        gap=None,
        residual_at_best=tracker.residual_at_best,
        iterations=k,
        status=status,
        wall_time=time.perf_counter() - start,
        z=s.e * z,
        lam=lam,
        dual_bound=tracker.dual_bound,
        telemetry=telemetry,
    )


def _relaxed_bound(res: SolveResult) -> float:
    """Lower bound from a run on the convex relaxation.

    The relaxed run's best value is only approximately optimal (its
    candidate may sit slightly off the constraint set), so it is capped by
    the best Lagrangian bound collected during the run when one is finite.
    """
    if math.isfinite(res.dual_bound):
        return min(res.o_best, res.dual_bound)
    return res.o_best


def initialize(
    p: SapProblem, opts: SolveOptions, recover: Optional[RecoverHook] = None
) -> AdmmState:
    """Starting iterates; in relaxation mode also the bound ``d*``."""
    s = opts.scaling or Scaling.identity(p.m, p.n)
    s.check(p)
    zeros = np.zeros(p.n)
    if opts.init_mode == "zeros":
        return AdmmState(zeros, zeros.copy(), zeros.copy(), np.zeros(p.m))
    if opts.init_mode == "warm":
        z0, lam0 = opts.warm_start
        return AdmmState(np.asarray(z0, float), np.asarray(z0, float), np.asarray(lam0, float), np.zeros(p.m))
    res = _run(relax(p), opts, s, zeros, zeros, recover, track_dual=True)
    if res.x_best is None:
        raise NoFeasibleCandidate("relaxation produced no feasible candidate", result=res)
    return AdmmState(res.z, res.z.copy(), res.lam, np.zeros(p.m), res.iterations, _relaxed_bound(res), res)


def solve(
    p: SapProblem, opts: Optional[SolveOptions] = None, recover: Optional[RecoverHook] = None
) -> SolveResult:
    """Run the heuristic; raises :class:`NoFeasibleCandidate` if nothing was accepted."""
    opts = opts or SolveOptions()
    start = time.perf_counter()
    s = opts.scaling or Scaling.identity(p.m, p.n)
    s.check(p)
    state = initialize(p, opts, recover)
    res = _run(p, opts, s, state.z, state.lam, recover, track_dual=False)
    res.wall_time = time.perf_counter() - start
    res.relaxation = state.relaxation
    res.d_star = state.d_star
    if res.d_star is not None and res.x_best is not None:
        res.gap = res.o_best - res.d_star
    if res.x_best is None:
        raise NoFeasibleCandidate(
            f"no candidate reached residual below {opts.eps_res} in {res.iterations} iterations",
            result=res,
        )
    return res


def solve_relaxation(
    p: SapProblem, opts: Optional[SolveOptions] = None, recover: Optional[RecoverHook] = None
) -> SolveResult:
    """Solve only the convex relaxation; ``d_star`` holds the resulting bound."""
    opts = opts or SolveOptions()
    s = opts.scaling or Scaling.identity(p.m, p.n)
    s.check(p)
    zeros = np.zeros(p.n)
    res = _run(relax(p), opts, s, zeros, zeros, recover, track_dual=True)
    if res.x_best is None:
        raise NoFeasibleCandidate("relaxation produced no feasible candidate", result=res)
    res.d_star = _relaxed_bound(res)
    res.gap = res.o_best - res.d_star
    return res
