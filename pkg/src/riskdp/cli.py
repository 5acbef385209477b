"""Command-line interface: solve, validate, oracle, and check-cuts.

Exit codes: 0 on success, 1 when the problem is proven infeasible (or a
cut-dump check finds violations), 2 on usage errors, 3 on numerical or I/O
failures.  ``solve`` writes three artifacts into the output directory: the
per-iteration log ``iterations.csv``, the cut dump ``cuts.csv``, and
``summary.json`` (whose ``lower_bound`` equals the last log row's value
exactly).  Logging verbosity is controlled by the ``RISKDP_LOG`` environment
variable (``error``, ``info``, or ``debug``; default ``error``).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io, oracle
from .engine import (ALGORITHMS, CUT_TIMINGS, ConfigError, EngineError,
                     RunConfig, run)
from .io import IoError, format_float
from .lp import SimplexError
from .model import LATTICE, Problem
from .oracle import OracleError

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_FAILURE = 3

ORACLE_METHODS = ("extensive-form", "nested-decomposition")

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("RISKDP_LOG", "error").lower()
    if name not in levels:
        print(f"warning: unknown RISKDP_LOG level {name!r}; using 'error'",
              file=sys.stderr)
        name = "error"
    logging.basicConfig(level=levels[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("riskdp").setLevel(levels[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskdp",
        description="Risk-averse multistage stochastic programming on scenario trees.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_solve = sub.add_parser("solve", help="run a sampled cutting-plane solve")
    p_solve.add_argument("input", help="problem JSON file")
    p_solve.add_argument("--alg", choices=ALGORITHMS, default="alg1")
    p_solve.add_argument("--iters", type=int, default=100)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--stall-window", type=int, default=10)
    p_solve.add_argument("--stall-tol", type=float, default=1e-9)
    p_solve.add_argument("--cut-timing", choices=CUT_TIMINGS, default="backward")
    p_solve.add_argument("--oracle-check", default="off",
                         help="off, final, or every:K")
    p_solve.add_argument("--out", default=".", help="artifact output directory")
    p_solve.add_argument("--risk-override", default=None,
                         help="expectation, cvar:EPS, or mixture:LAMBDA,EPS "
                              "applied to every stage/node")

    p_val = sub.add_parser("validate", help="parse and validate a problem file")
    p_val.add_argument("input", help="problem JSON file")

    p_orc = sub.add_parser("oracle", help="exact reference value (small instances)")
    p_orc.add_argument("input", help="problem JSON file")
    p_orc.add_argument("--method", choices=ORACLE_METHODS, required=True)

    p_chk = sub.add_parser("check-cuts",
                           help="replay a cut dump against exact recourse values")
    p_chk.add_argument("input", help="problem JSON file")
    p_chk.add_argument("cuts", help="cut dump CSV written by solve")
    p_chk.add_argument("--points", type=int, default=100,
                       help="random histories checked per pool")
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.add_argument("--tol", type=float, default=1e-6)
    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_solve(args) -> int:
    if args.risk_override is not None:
        try:
            override = io.parse_risk_override(args.risk_override)
        except ValueError as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    problem = io.load_problem(args.input)
    if args.risk_override is not None:
        problem = io.apply_risk_override(problem, override)
    cfg = RunConfig(algorithm=args.alg, max_iters=args.iters, seed=args.seed,
                    stall_window=args.stall_window, stall_tol=args.stall_tol,
                    cut_timing=args.cut_timing, oracle_check=args.oracle_check)
    result = run(problem, cfg)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_iterations_csv(outdir / "iterations.csv", result, problem.dim)
    io.write_cuts_csv(outdir / "cuts.csv", result.pools)
    io.write_summary_json(outdir / "summary.json", result, args.seed)
    if result.status == "infeasible":
        print(f"infeasible: proven at iteration {result.iters} -> {outdir}")
        return EXIT_INFEASIBLE
    print(f"{result.status}: lower_bound {format_float(result.final_lower_bound)} "
          f"after {result.iters} iterations -> {outdir}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    io.load_problem(args.input)  # raises IoError on any violation
    print("ok")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    problem = io.load_problem(args.input)
    if args.method == "extensive-form":
        value = oracle.extensive_form_value(problem)
    else:
        value = oracle.exact_nested_decomposition(problem).value
    if math.isinf(value):
        print("infeasible")
        return EXIT_INFEASIBLE
    print(format_float(value))
    return EXIT_OK


def _history_box(p: Problem, where: int) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the history block a pool's cuts are claimed valid on.

    Lattice pools share cuts across same-stage realizations, so the box is
    the per-stage intersection of the realization boxes; tree pools follow
    the node path, where each stage has exactly one box.
    """
    if p.form == LATTICE:
        lbs = [np.max([r.lb for r in p.stages[s - 1].realizations], axis=0)
               for s in range(1, where)]
        ubs = [np.min([r.ub for r in p.stages[s - 1].realizations], axis=0)
               for s in range(1, where)]
    else:
        chain = []
        m = where
        while p.node(m).parent is not None:
            chain.append(m)
            m = p.node(m).parent
        chain.reverse()
        lbs = [p.node(m).payload.lb for m in chain]
        ubs = [p.node(m).payload.ub for m in chain]
    lo, hi = np.concatenate(lbs), np.concatenate(ubs)
    if np.any(lo > hi):
        raise IoError(f"pool {where}: empty history box intersection")
    return lo, hi


def _cmd_check_cuts(args) -> int:
    problem = io.load_problem(args.input)
    records = io.read_cuts_csv(args.cuts)
    rng = np.random.default_rng(args.seed)
    by_where: dict[int, list[io.CutRecord]] = {}
    for rec in records:
        by_where.setdefault(rec.where, []).append(rec)
    n_violations = 0
    n_checked = 0
    for where in sorted(by_where):
        lo, hi = _history_box(problem, where)
        points = rng.uniform(lo, hi, size=(args.points, lo.shape[0]))
        for x in points:
            true = oracle.true_recourse_value(
                problem, where, np.concatenate([problem.x0, x]))
            for rec in by_where[where]:
                n_checked += 1
                if rec.kind == io.CUT_KIND_OPTIMALITY:
                    if math.isinf(true):
                        continue  # any lower bound is valid where recourse is +inf
                    val = rec.theta + float(rec.beta @ (x - rec.anchor))
                    if val > true + args.tol:
                        n_violations += 1
                        print(f"violation: optimality cut (pool {where}, iteration "
                              f"{rec.iteration}) claims {format_float(val)} above "
                              f"exact recourse {format_float(true)}", file=sys.stderr)
                else:
                    if math.isinf(true):
                        continue  # excluding an infeasible history is correct
                    if float(rec.beta @ x) > rec.theta + args.tol:
                        n_violations += 1
                        print(f"violation: feasibility cut (pool {where}, iteration "
                              f"{rec.iteration}) excludes a history with finite "
                              f"recourse {format_float(true)}", file=sys.stderr)
    print(f"checked {len(records)} cuts at {args.points} points per pool: "
          f"{n_violations} violations")
    return EXIT_OK if n_violations == 0 else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_DISPATCH = {"solve": _cmd_solve, "validate": _cmd_validate,
             "oracle": _cmd_oracle, "check-cuts": _cmd_check_cuts}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse signals usage errors via exit code 2
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return _DISPATCH[args.cmd](args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IoError, OracleError, EngineError, SimplexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
