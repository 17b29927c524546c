"""Command-line interface: ``sapadmm {solve,relax,oracle,gen,bench}``.

Results are JSON on stdout (or ``--out``).  The exit code carries the
solve status: 0 converged, 2 iteration limit, 3 no feasible candidate,
1 bad input, 4 problem too large for the oracle.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time

import numpy as np

from . import io
from .admm import SolveOptions, point_repair, solve, solve_relaxation
from .errors import (
    BudgetExceeded,
    NoFeasibleCandidate,
    SapError,
    TooManyConstraintRows,
    TooManyDegreesOfFreedom,
)
from .oracle import GridSpec, dp_solve, exhaustive
from .portfolio import build_sap, default_scaling, spec_from_dict, spec_to_dict, synthesize_instance
from .sap import Scaling, equilibrate

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MAX_ITER = 2
EXIT_INFEASIBLE = 3
EXIT_ORACLE_REFUSED = 4

STATUS_EXIT = {"converged": EXIT_OK, "max_iter": EXIT_MAX_ITER, "no_feasible_candidate": EXIT_INFEASIBLE}


def load(path: str, scaling_mode: str = "file", candidate: str = "z"):
    """Read a problem or portfolio file; return ``(problem, scaling, recover)``.

    Portfolio files always use the holdings-based candidate; for problem
    files ``candidate="repair"`` selects :func:`point_repair`.
    """
    data = io.read_json(path)
    fmt = data.get("format")
    if fmt == io.PORTFOLIO_FORMAT:
        try:
            spec = spec_from_dict(data)
            problem, recover, _ = build_sap(spec)
        except (SapError, TypeError, ValueError, np.linalg.LinAlgError) as exc:
            raise io.FileError(f"{path}: {exc}") from exc
        scaling = None if scaling_mode == "none" else default_scaling(spec)
        return problem, scaling, recover
    if fmt == io.SAP_FORMAT:
        try:
            problem, file_scaling = io.problem_from_dict(data)
        except io.FileError as exc:
            raise io.FileError(f"{path}: {exc}") from exc
        if scaling_mode == "file":
            scaling = file_scaling
        elif scaling_mode == "auto":
            scaling = equilibrate(problem.A)
        else:
            scaling = None
        recover = point_repair(problem) if candidate == "repair" else None
        return problem, scaling, recover
    raise io.FileError(f"{path}: field 'format' must be '{io.SAP_FORMAT}' or '{io.PORTFOLIO_FORMAT}'")


def _emit(obj, out_path):
    text = io.dumps(obj)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _options(args, scaling, telemetry_fh=None) -> SolveOptions:
    sink = None
    if telemetry_fh is not None:
        def sink(record):
            telemetry_fh.write(json.dumps({k: io.encode_number(v) for k, v in record.items()}) + "\n")
    return SolveOptions(
        eps_res=args.eps_res,
        eps_obj=args.eps_obj,
        check_every=args.check_every,
        patience=args.patience,
        max_iter=args.max_iter,
        scaling=scaling,
        init_mode="zeros" if getattr(args, "init", "relax") == "zeros" else "relaxation",
        parallel_prox=getattr(args, "parallel_prox", False),
        telemetry=sink,
    )


def _echo(args, opts: SolveOptions) -> dict:
    echo = opts.echo()
    echo["scaling"] = args.scaling
    echo["seed"] = args.seed
    echo["candidate"] = args.candidate
    return echo


def cmd_solve(args) -> int:
    problem, scaling, recover = load(args.problem, args.scaling, args.candidate)
    fh = open(args.telemetry, "w", encoding="utf-8") if args.telemetry else None
    try:
        opts = _options(args, scaling, fh)
        try:
            res = solve(problem, opts, recover=recover)
        except NoFeasibleCandidate as exc:
            res = exc.result
            res.status = "no_feasible_candidate"
    finally:
        if fh is not None:
            fh.close()
    _emit(io.result_to_dict(res, _echo(args, opts)), args.out)
    return STATUS_EXIT[res.status]


def cmd_relax(args) -> int:
    problem, scaling, recover = load(args.problem, args.scaling, args.candidate)
    opts = _options(args, scaling)
    try:
        res = solve_relaxation(problem, opts, recover=recover)
    except NoFeasibleCandidate as exc:
        res = exc.result
        res.status = "no_feasible_candidate"
    if args.dump_envelopes:
        from .sap import relax

        relaxed = relax(problem)
        with open(args.dump_envelopes, "w", encoding="utf-8") as fh:
            fh.write(io.dumps([f.to_list() for f in relaxed.f]))
    _emit(io.result_to_dict(res, _echo(args, opts)), args.out)
    return STATUS_EXIT[res.status]


def cmd_oracle(args) -> int:
    problem, _, _ = load(args.problem, "none")
    grid = GridSpec(step=args.grid_step, budget=args.budget)
    start = time.perf_counter()
    try:
        try:
            x, value = exhaustive(problem, grid)
            method = "exhaustive"
        except TooManyDegreesOfFreedom:
            x, value = dp_solve(problem, grid)
            method = "dp"
    except TooManyConstraintRows:
        sys.stderr.write("problem too large for the oracle: need n - rank(A) <= 4 or m <= 2\n")
        return EXIT_ORACLE_REFUSED
    except BudgetExceeded as exc:
        sys.stderr.write(f"problem too large for the oracle: {exc}; try a coarser --grid-step or a larger --budget\n")
        return EXIT_ORACLE_REFUSED
    elapsed = time.perf_counter() - start
    out = {
        "x_best": None if x is None else [io.encode_number(v) for v in x],
        "o_best": io.encode_number(value),
        "d_star": None,
        "gap": None,
        "residual": None if x is None else io.encode_number(problem.residual_norm(x)),
        "iterations": 0,
        "status": "oracle" if x is not None else "no_feasible_candidate",
        "runtime_ms": 1000.0 * elapsed,
        "options": {"grid_step": args.grid_step, "method": method, "budget": args.budget},
    }
    _emit(out, args.out)
    return EXIT_OK if x is not None else EXIT_INFEASIBLE


def cmd_gen(args) -> int:
    spec = synthesize_instance(args.seed, args.assets, args.factors, args.lots)
    _emit(spec_to_dict(spec), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = []
    for seed in range(args.seed, args.seed + args.seeds):
        spec = synthesize_instance(seed, args.assets, args.factors, args.lots)
        problem, recover, _ = build_sap(spec)
        opts = SolveOptions(scaling=default_scaling(spec), max_iter=args.max_iter)
        try:
            res = solve(problem, opts, recover=recover)
            rows.append((seed, res.status, 1000 * res.wall_time, 1e4 * res.gap, res.iterations))
        except NoFeasibleCandidate as exc:
            rows.append((seed, "no_feasible_candidate", 1000 * exc.result.wall_time, float("nan"), exc.result.iterations))
    print(f"{'seed':>6} {'status':>22} {'runtime_ms':>11} {'gap_bp':>9} {'iters':>6}")
    for seed, status, ms, gap, iters in rows:
        print(f"{seed:>6} {status:>22} {ms:>11.1f} {gap:>9.3f} {iters:>6}")
    times = [r[2] for r in rows]
    gaps = [r[3] for r in rows if r[3] == r[3]]
    sd = statistics.stdev(times) if len(times) > 1 else 0.0
    print(f"runtime_ms mean {statistics.mean(times):.1f} std {sd:.1f}")
    if gaps:
        print(f"gap_bp mean {statistics.mean(gaps):.3f} median {statistics.median(gaps):.3f} max {max(gaps):.3f}")
    return EXIT_OK if all(r[1] == "converged" for r in rows) else EXIT_MAX_ITER


def _solver_flags(p: argparse.ArgumentParser, init: bool = True):
    p.add_argument("problem", help="problem (sap/1) or portfolio (portfolio/1) JSON file")
    p.add_argument("--eps-res", type=float, default=3e-4)
    p.add_argument("--eps-obj", type=float, default=1e-5)
    p.add_argument("--check-every", type=int, default=10)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--scaling", choices=("file", "auto", "none"), default="file",
                   help="file: scaling stored in the input (portfolio inputs use built-in magnitudes); "
                        "auto: row/column equilibration for problem files; none: identity")
    p.add_argument("--seed", type=int, default=0, help="recorded in the output; the solver is deterministic")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--parallel-prox", action="store_true")
    p.add_argument("--candidate", choices=("z", "repair"), default="z",
                   help="z: projection iterate; repair: keep point-piece components of the prox "
                        "iterate and fix A x = b on the rest (problem files only)")
    if init:
        p.add_argument("--init", choices=("relax", "zeros"), default="relax")
        p.add_argument("--telemetry", help="write per-check records as JSON lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sapadmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the ADMM heuristic")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("relax", help="solve the convex relaxation only")
    _solver_flags(p, init=False)
    p.add_argument("--dump-envelopes", help="write the envelope of every component here")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("oracle", help="brute-force reference solution for small problems")
    p.add_argument("problem")
    p.add_argument("--grid-step", type=float, default=1e-2)
    p.add_argument("--budget", type=int, default=20_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="write a synthetic portfolio instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--assets", type=int, default=100)
    p.add_argument("--factors", type=int, default=10)
    p.add_argument("--lots", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="solve several synthetic instances and summarize")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--assets", type=int, default=1000)
    p.add_argument("--factors", type=int, default=100)
    p.add_argument("--lots", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=10000)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SapError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
