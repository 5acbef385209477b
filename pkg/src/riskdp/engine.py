"""Algorithm drivers for risk-averse nested Benders decomposition.

Three sampled cutting-plane algorithms over the problems of :mod:`riskdp.model`:

* ``alg1`` — shared per-stage cut pools on lattice (interstage independent)
  problems with relatively complete recourse;
* ``alg2`` — ``alg1`` plus feasibility cuts and a backtracking forward pass
  for instances *without* relatively complete recourse (restricted to the
  linear-cost, equality-plus-box form);
* ``alg3`` — per-node cut pools on general scenario trees with per-node risk
  measures.

All three share one subproblem layout.  A stage-t solve has variables
``[x_t, w, z]`` with objective ``w + z``: ``w`` is the epigraph of the
piecewise-linear stage cost, ``z`` under-estimates the risk-adjusted recourse
through the optimality-cut rows.  Inequality rows are ordered
``[static G rows][cost-piece rows][optimality-cut rows][feasibility-cut
rows]`` — the order the subgradient assembly of :mod:`riskdp.valuefn` relies
on.  The final stage is handled uniformly through a permanent zero cut
(the beyond-horizon value is identically zero).

Cut timing is configurable: the default ``backward`` timing builds cuts in a
separate stage-descending sweep after the forward pass (each stage's cut then
sees the next stage's pool already updated this iteration); the ``forward``
timing builds each cut inline during the ascending pass from the
previous-generation pools.  The anchor-equality assertion of
:mod:`riskdp.cuts` is valid under both orderings because pools only grow.

Sampling is counter-based: one uniform draw per (seed, iteration, stage),
so replay is exact and independent of execution order.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .cuts import (PHASE1_THRESHOLD, CutPool, build_feasibility_cut,
                   build_optimality_cut, zero_terminal_pool)
from .model import (LATTICE, TREE, Problem, SubproblemData, assemble_subproblem,
                    validate_problem)
from .valuefn import assemble_pi

logger = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "alg3")
CUT_TIMINGS = ("forward", "backward")
STATUS_STALL = "converged_by_stall"
STATUS_ITER_LIMIT = "iter_limit"
STATUS_INFEASIBLE = "infeasible"

MAX_BACKTRACKS_PER_ITERATION = 10_000
_UINT64_MASK = (1 << 64) - 1


class EngineError(RuntimeError):
    """Hard failure inside a driver (violated preconditions, bad bounds)."""


class ConfigError(ValueError):
    """Invalid run configuration or problem/algorithm mismatch."""


@dataclass
class RunConfig:
    """Run parameters.

    ``oracle_check`` is ``"off"``, ``"final"`` or ``"every:K"``; ``probe`` is
    an optional callable invoked at every cut-construction child solve with a
    dict (keys ``stage``, ``realization``, ``history``, ``value``, ``pi``,
    ``resolve``) — ``resolve(history)`` re-solves the same subproblem against
    the same pools and must be used before the pools advance.
    """

    algorithm: str = "alg1"
    max_iters: int = 100
    seed: int = 0
    stall_window: int = 10
    stall_tol: float = 1e-9
    cut_timing: str = "backward"
    oracle_check: str = "off"
    probe: object | None = None


@dataclass
class IterationReport:
    k: int
    path: tuple
    lower_bound: float
    x1: np.ndarray
    cuts_opt: dict[int, int] = field(default_factory=dict)
    cuts_feas: dict[int, int] = field(default_factory=dict)
    backtracks: int = 0
    wall_ms: float = 0.0

    @property
    def n_cuts_opt(self) -> int:
        return sum(self.cuts_opt.values())

    @property
    def n_cuts_feas(self) -> int:
        return sum(self.cuts_feas.values())


@dataclass
class RunResult:
    status: str
    reports: list[IterationReport]
    pools: "PoolSet"
    final_lower_bound: float | None = None
    final_x1: np.ndarray | None = None
    iters: int = 0
    diagnostics: dict = field(default_factory=dict)
    oracle_value: float | None = None
    oracle_gap: float | None = None


@dataclass
class NodeSolution:
    """One subproblem solve: decision, value, LP duals, history subgradient."""

    x: np.ndarray
    value: float
    duals: lp.LpSolution
    pi: np.ndarray
    sub: SubproblemData


class PoolSet:
    """All cut pools of one run.

    Lattice form: shared pools keyed by stage; the pool with key ``t`` holds
    cuts over ``x_{1:t-1}`` (its rows appear in stage-(t-1) subproblems), and
    key ``T+1`` is the permanent zero pool.  Tree form: pools keyed by node
    id; node ``m``'s pool holds cuts over ``x_{1:depth(m)}`` aggregating
    ``m``'s children (leaf pools are permanent zero pools).
    """

    def __init__(self, problem: Problem):
        self.problem = problem
        n, t_end = problem.dim, problem.horizon
        self.opt: dict[int, CutPool] = {}
        self.feas: dict[int, CutPool] = {}
        if problem.form == LATTICE:
            for t in range(2, t_end + 1):
                self.opt[t] = CutPool((t - 1) * n)
                self.feas[t] = CutPool((t - 1) * n)
            self.opt[t_end + 1] = zero_terminal_pool(t_end * n)
            self.feas[t_end + 1] = CutPool(t_end * n)
        else:
            for node in problem.nodes:
                if node.parent is None:
                    continue
                d = problem.depth(node.id)
                if d == t_end:
                    self.opt[node.id] = zero_terminal_pool(d * n)
                else:
                    self.opt[node.id] = CutPool(d * n)
                self.feas[node.id] = CutPool(d * n)

    def rows_for(self, where) -> tuple[CutPool, CutPool]:
        """Pools whose cuts appear as rows inside the given subproblem."""
        if self.problem.form == LATTICE:
            t, _ = where
            return self.opt[t + 1], self.feas[t + 1]
        return self.opt[where], self.feas[where]

    def n_optimality_cuts(self) -> int:
        return sum(len(p.optimality) for p in self.opt.values()) - self._n_zero_pools()

    def n_feasibility_cuts(self) -> int:
        return sum(len(p.feasibility) for p in self.feas.values())

    def _n_zero_pools(self) -> int:
        if self.problem.form == LATTICE:
            return 1
        return len(self.problem.nodes_at_depth(self.problem.horizon))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _stage_uniform(seed: int, k: int, t: int) -> float:
    """One deterministic uniform draw keyed by (seed, iteration, stage)."""
    bg = np.random.Philox(counter=[0, 0, k, t], key=seed & _UINT64_MASK)
    return float(np.random.Generator(bg).random())


def _pick(probs: np.ndarray, u: float) -> int:
    edges = np.cumsum(probs)
    j = int(np.searchsorted(edges, u, side="right"))
    return min(j, probs.shape[0] - 1)


def sample_path(problem: Problem, seed: int, k: int) -> list:
    """Sampled node path for iteration ``k``; entry ``path[t]`` addresses stage t.

    Lattice: realization indices (``path[1]`` is always 0).  Tree: node ids,
    starting from the root's single child.  A pure function of its arguments.
    """
    t_end = problem.horizon
    path: list = [None] * (t_end + 1)
    if problem.form == LATTICE:
        path[1] = 0
        for t in range(2, t_end + 1):
            u = _stage_uniform(seed, k, t)
            path[t] = _pick(problem.stage_probs(t), u)
    else:
        current = problem.children(problem.root_id)[0]
        path[1] = current
        for t in range(2, t_end + 1):
            kids = problem.children(current)
            u = _stage_uniform(seed, k, t)
            current = kids[_pick(problem.child_probs(path[t - 1]), u)]
            path[t] = current
    return path


# ---------------------------------------------------------------------------
# subproblem solves
# ---------------------------------------------------------------------------

def build_stage_lp(sub: SubproblemData, view, z_lo: float) -> lp.LpProblem:
    """Canonical stage LP: variables ``[x_t, w, z]``, objective ``w + z``."""
    n = sub.lb.shape[0]
    h_dec = sub.history[n:]
    q = sub.eq_rhs.shape[0]
    a_eq = np.hstack([sub.a_cur, np.zeros((q, 2))]) if q else None
    b_eq = sub.eq_rhs if q else None
    blocks, rhs = [], []
    r = sub.ineq_rhs.shape[0]
    if r:
        blocks.append(np.hstack([sub.g_cur, np.zeros((r, 2))]))
        rhs.append(sub.ineq_rhs)
    n_p = sub.piece_cur.shape[0]
    piece_block = np.hstack([sub.piece_cur, np.full((n_p, 1), -1.0), np.zeros((n_p, 1))])
    blocks.append(piece_block)
    rhs.append(-sub.piece_const)
    if view.n_opt:
        blocks.append(np.hstack([view.opt_beta2,
                                 np.zeros((view.n_opt, 1)), np.full((view.n_opt, 1), -1.0)]))
        rhs.append(view.opt_rhs_const - view.opt_beta1 @ h_dec)
    if view.n_feas:
        blocks.append(np.hstack([view.feas_beta2, np.zeros((view.n_feas, 2))]))
        rhs.append(view.feas_rhs_const - view.feas_beta1 @ h_dec)
    return lp.LpProblem(c=np.concatenate([np.zeros(n), [1.0, 1.0]]),
                        a_eq=a_eq, b_eq=b_eq,
                        a_ub=np.vstack(blocks), b_ub=np.concatenate(rhs),
                        lower=np.concatenate([sub.lb, [-np.inf, z_lo]]),
                        upper=np.concatenate([sub.ub, [np.inf, np.inf]]))


def solve_node(problem: Problem, where, history, pools: PoolSet,
               z_lo: float | None = None) -> NodeSolution:
    """Solve one stage subproblem and assemble its history subgradient.

    ``where`` is ``(t, j)`` in lattice form or a node id in tree form.  The
    LP includes the subproblem's optimality- and feasibility-cut rows; ``z``
    is bounded below by the certified recourse bound for the next stage.
    """
    sub = assemble_subproblem(problem, where, history)
    opt_pool, feas_pool = pools.rows_for(where)
    view = opt_pool.view(problem.dim)
    fview = feas_pool.view(problem.dim)
    merged = _merge_views(view, fview)
    if z_lo is None:
        z_lo = problem.z_lower(sub.t)
    prob = build_stage_lp(sub, merged, z_lo)
    sol = lp.solve(prob)
    if sol.status == lp.INFEASIBLE:
        raise EngineError(
            f"stage-{sub.t} subproblem infeasible at realization {sub.realization}: "
            "the instance lacks relatively complete recourse (use the feasibility-cut "
            "algorithm) or carries inconsistent data")
    if sol.status == lp.UNBOUNDED:
        raise EngineError(
            f"stage-{sub.t} subproblem unbounded: lower_value_bound for stage "
            f"{sub.t + 1} does not bound the recourse from below")
    n = problem.dim
    pi = assemble_pi(sub, sol, merged).s
    return NodeSolution(x=sol.x[:n].copy(), value=sol.objective, duals=sol, pi=pi, sub=sub)


def _merge_views(opt_view, feas_view):
    """Combine the optimality-pool and feasibility-pool views of one subproblem."""
    from .cuts import PoolView
    return PoolView(opt_beta1=opt_view.opt_beta1, opt_beta2=opt_view.opt_beta2,
                    opt_rhs_const=opt_view.opt_rhs_const,
                    feas_beta1=feas_view.feas_beta1, feas_beta2=feas_view.feas_beta2,
                    feas_rhs_const=feas_view.feas_rhs_const)


def phase_one(problem: Problem, where, history, pools: PoolSet):
    """Elastic feasibility measure of one stage system at a fixed history.

    Minimizes the l1 norm of equality violations subject to the box and the
    accumulated feasibility-cut rows (kept hard).  When the hard cut rows
    themselves conflict with the box — possible at a history no cut has
    excluded yet — the program is re-solved with the cut rows elasticized as
    well, which is always feasible and still yields a positive value with
    valid multipliers for a new cut.  Returns ``(value, dual_eq, dual_feas,
    sub, fview)``.
    """
    sub = assemble_subproblem(problem, where, history)
    _, feas_pool = pools.rows_for(where)
    fview = feas_pool.view(problem.dim)
    n = sub.lb.shape[0]
    q = sub.eq_rhs.shape[0]
    k_rows = fview.n_feas
    h_dec = sub.history[n:]
    feas_rhs = (fview.feas_rhs_const - fview.feas_beta1 @ h_dec
                if k_rows else np.zeros(0))
    for elastic_rows in (False, True):
        n_extra = k_rows if elastic_rows else 0
        c = np.concatenate([np.zeros(n), np.ones(2 * q + n_extra)])
        a_eq = (np.hstack([sub.a_cur, np.eye(q), -np.eye(q),
                           np.zeros((q, n_extra))]) if q else None)
        a_ub = b_ub = None
        if k_rows:
            slack = [-np.eye(k_rows)] if elastic_rows else []
            a_ub = np.hstack([fview.feas_beta2, np.zeros((k_rows, 2 * q))] + slack)
            b_ub = feas_rhs
        prob = lp.LpProblem(c=c, a_eq=a_eq, b_eq=sub.eq_rhs if q else None,
                            a_ub=a_ub, b_ub=b_ub,
                            lower=np.concatenate([sub.lb, np.zeros(2 * q + n_extra)]),
                            upper=np.concatenate([sub.ub,
                                                  np.full(2 * q + n_extra, np.inf)]))
        sol = lp.solve(prob)
        if sol.status == lp.OPTIMAL:
            dual_feas = sol.dual_ineq[:k_rows] if k_rows else np.zeros(0)
            return sol.objective, sol.dual_eq, dual_feas, sub, fview
        if sol.status == lp.UNBOUNDED:  # pragma: no cover - c >= 0 forbids this
            raise EngineError("phase-I program unbounded")
    raise EngineError(  # pragma: no cover - the elastic program is always feasible
        f"phase-I program at stage {sub.t} infeasible even with elastic cut rows")


# ---------------------------------------------------------------------------
# the driver
# ---------------------------------------------------------------------------

class _Driver:
    def __init__(self, problem: Problem, cfg: RunConfig):
        self.problem = problem
        self.cfg = cfg
        self.pools = PoolSet(problem)
        self.stage1 : NodeSolution | None = None
        self.pi_norm_max: dict[int, float] = {}
        self.pi_norm_first: dict[int, float] = {}
        self.feas_counter = 0

    # -- small helpers -----------------------------------------------------

    def _stage1_where(self):
        if self.problem.form == LATTICE:
            return (1, 0)
        return self.problem.children(self.problem.root_id)[0]

    def _solve_stage1(self) -> NodeSolution:
        return solve_node(self.problem, self._stage1_where(),
                          self.problem.x0, self.pools)

    def _children_of(self, t: int, path: list):
        """(where, prob, risk) triples of the stage-t children plus the pool target."""
        p = self.problem
        if p.form == LATTICE:
            probs = p.stage_probs(t)
            wheres = [(t, j) for j in range(probs.shape[0])]
            spec = p.stages[t - 1].risk
            target = self.pools.opt[t]
            target_key = t
        else:
            parent = path[t - 1]
            kids = p.children(parent)
            probs = p.child_probs(parent)
            wheres = kids
            spec = p.node(parent).risk
            target = self.pools.opt[parent]
            target_key = parent
        return wheres, probs, spec, target, target_key

    def _record_pi(self, k: int, t: int, pi: np.ndarray) -> None:
        norm = float(np.linalg.norm(pi))
        self.pi_norm_max[t] = max(self.pi_norm_max.get(t, 0.0), norm)
        if k <= 5:
            self.pi_norm_first[t] = max(self.pi_norm_first.get(t, 0.0), norm)

    def _build_cut_at(self, t: int, path: list, decisions: list[np.ndarray], k: int,
                      counters: dict[int, int]):
        """Solve every stage-t child of the path node at t-1 and append the cut.

        Returns the child addresses and their solutions so the forward timing
        can reuse the sampled child's decision without a second solve.
        """
        p = self.problem
        n = p.dim
        hist = np.concatenate(decisions[:t])
        anchor = hist[n:]
        wheres, probs, spec, target, target_key = self._children_of(t, path)
        sols = []
        for where in wheres:
            ns = solve_node(p, where, hist, self.pools)
            sols.append(ns)
            self._record_pi(k, t, ns.pi)
            if self.cfg.probe is not None:
                self.cfg.probe({
                    "stage": t, "realization": where, "history": hist.copy(),
                    "value": ns.value, "pi": ns.pi.copy(),
                    "resolve": lambda h, w=where: solve_node(p, w, h, self.pools).value,
                })
        cut = build_optimality_cut([ns.value for ns in sols], [ns.pi for ns in sols],
                                   probs, spec, anchor, stage=target_key, iteration=k)
        target.append_optimality(cut)
        counters[t] = counters.get(t, 0) + 1
        return wheres, sols

    def _gate(self, t: int, path: list, decisions: list[np.ndarray], k: int,
              counters: dict[int, int]) -> bool:
        """Run the phase-I gates for every stage-t child; append a cut on failure.

        Returns True when all children are feasible at the current history.
        """
        p = self.problem
        hist = np.concatenate(decisions[:t])
        anchor = hist[p.dim:]
        if p.form == LATTICE:
            wheres = [(t, j) for j in range(p.stage_probs(t).shape[0])]
        else:  # pragma: no cover - feasibility algorithm is lattice-only
            wheres = p.children(path[t - 1])
        for where in wheres:
            value, dual_eq, dual_feas, sub, fview = phase_one(p, where, hist, self.pools)
            if value > PHASE1_THRESHOLD:
                if t == 1:  # nothing earlier to cut; the problem is infeasible
                    return False
                pool = self.pools.feas[t]
                self.feas_counter += 1
                cut = build_feasibility_cut(value, dual_eq, dual_feas, sub.a_hist,
                                            fview.feas_beta1, anchor, stage=t,
                                            index=self.feas_counter, iteration=k)
                pool.append_feasibility(cut)
                counters[t] = counters.get(t, 0) + 1
                logger.debug("iteration %d: feasibility cut %d at stage %d "
                             "(phase-I value %.3e)", k, self.feas_counter, t, value)
                return False
        return True

    # -- one iteration -----------------------------------------------------

    def iterate(self, k: int) -> IterationReport | None:
        """Run iteration k; returns None when alg2 proves infeasibility."""
        p, cfg = self.problem, self.cfg
        t_end = p.horizon
        started = time.perf_counter()
        path = sample_path(p, cfg.seed, k)
        counters_opt: dict[int, int] = {}
        counters_feas: dict[int, int] = {}
        backtracks = 0
        alg2 = cfg.algorithm == "alg2"
        forward_cuts = cfg.cut_timing == "forward"
        lb_report = None
        x1_report = None
        decisions: list[np.ndarray] = [self.problem.x0]
        s = 1
        while s <= t_end:
            if alg2 and not self._gate(s, path, decisions, k, counters_feas):
                if s == 1:
                    return None
                backtracks += 1
                if backtracks > MAX_BACKTRACKS_PER_ITERATION:
                    raise EngineError("backtracking loop exceeded its safety limit")
                s -= 1
                decisions = decisions[:s]
                if s == 1:
                    self.stage1 = None  # its feasible region changed
                continue
            if s == 1:
                if self.stage1 is None:
                    self.stage1 = self._solve_stage1()
                ns = self.stage1
                lb_report = ns.value
                x1_report = ns.x.copy()
            else:
                sampled = path[s] if p.form != LATTICE else (s, path[s])
                if forward_cuts:
                    wheres, sols = self._build_cut_at(s, path, decisions, k,
                                                      counters_opt)
                    ns = sols[wheres.index(sampled)]
                else:
                    ns = solve_node(p, sampled,
                                    np.concatenate(decisions[:s]), self.pools)
            decisions.append(ns.x)
            s += 1
        if not forward_cuts:
            for t in range(t_end, 1, -1):
                self._build_cut_at(t, path, decisions, k, counters_opt)
        self.stage1 = self._solve_stage1()  # fresh bound, handed to iteration k+1
        wall_ms = (time.perf_counter() - started) * 1000.0
        return IterationReport(k=k, path=tuple(path[1:]), lower_bound=lb_report,
                               x1=x1_report, cuts_opt=counters_opt,
                               cuts_feas=counters_feas, backtracks=backtracks,
                               wall_ms=wall_ms)


def _check_config(problem: Problem, cfg: RunConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")
    if cfg.cut_timing not in CUT_TIMINGS:
        raise ConfigError(f"unknown cut timing {cfg.cut_timing!r}")
    if cfg.max_iters < 1:
        raise ConfigError("max_iters must be >= 1")
    if cfg.stall_tol < 0.0:
        raise ConfigError("stall_tol must be >= 0")
    if cfg.stall_window < 1:
        raise ConfigError("stall_window must be >= 1")
    _parse_oracle_check(cfg.oracle_check)
    violations = validate_problem(problem)
    if violations:
        raise ConfigError("invalid problem: " + "; ".join(violations))
    if cfg.algorithm in ("alg1", "alg2") and problem.form != LATTICE:
        raise ConfigError(f"{cfg.algorithm} requires lattice form")
    if cfg.algorithm == "alg3" and problem.form != TREE:
        raise ConfigError("alg3 requires tree form")
    if cfg.algorithm == "alg2":
        for s, stage in enumerate(problem.stages, start=1):
            for j, real in enumerate(stage.realizations):
                if real.cost.n_pieces != 1:
                    raise ConfigError(
                        "the feasibility-cut algorithm supports linear (single-piece) "
                        f"costs only; stage {s} realization {j} has {real.cost.n_pieces}")
                if real.h.shape[0]:
                    raise ConfigError(
                        "the feasibility-cut algorithm supports the equality-plus-box "
                        f"form only; stage {s} realization {j} carries static inequality rows")


def _parse_oracle_check(value: str) -> tuple[str, int]:
    if value == "off":
        return ("off", 0)
    if value == "final":
        return ("final", 0)
    if value.startswith("every:"):
        try:
            k = int(value.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad oracle-check interval in {value!r}")
        if k < 1:
            raise ConfigError("oracle-check interval must be >= 1")
        return ("every", k)
    raise ConfigError(f"oracle_check must be off, final or every:K, got {value!r}")


def _oracle_value(problem: Problem) -> float:
    from . import oracle
    return oracle.reference_value(problem)


def run(problem: Problem, cfg: RunConfig) -> RunResult:
    """Run the configured algorithm to stall, iteration limit, or infeasibility.

    The reported per-iteration lower bound is the first-stage value computed
    with the pools available *entering* the iteration; after the final
    iteration one fresh first-stage solve provides ``final_lower_bound`` and
    ``final_x1``.  Stopping: the run stalls when the improvement of the fresh
    post-iteration bound stays at or below ``stall_tol`` for ``stall_window``
    consecutive iterations.
    """
    _check_config(problem, cfg)
    mode, every = _parse_oracle_check(cfg.oracle_check)
    driver = _Driver(problem, cfg)
    reports: list[IterationReport] = []
    status = STATUS_ITER_LIMIT
    stall_run = 0
    oracle_value = None
    for k in range(1, cfg.max_iters + 1):
        report = driver.iterate(k)
        if report is None:
            status = STATUS_INFEASIBLE
            logger.info("iteration %d: first stage infeasible; stopping", k)
            break
        reports.append(report)
        fresh = driver.stage1.value
        improvement = fresh - report.lower_bound
        logger.info("iteration %d: lower bound %.12g (+%.3g), %d optimality / %d "
                    "feasibility cuts, %d backtracks", k, report.lower_bound,
                    improvement, report.n_cuts_opt, report.n_cuts_feas,
                    report.backtracks)
        if mode == "every" and k % every == 0:
            oracle_value = _oracle_value(problem)
            logger.info("iteration %d: oracle %.12g, gap %.3e", k, oracle_value,
                        oracle_value - fresh)
        if improvement <= cfg.stall_tol:
            stall_run += 1
            if stall_run >= cfg.stall_window:
                status = STATUS_STALL
                break
        else:
            stall_run = 0
    diagnostics = {
        "pi_norm_max": dict(sorted(driver.pi_norm_max.items())),
        "pi_norm_first5": dict(sorted(driver.pi_norm_first.items())),
    }
    for t, total in driver.pi_norm_max.items():
        first = driver.pi_norm_first.get(t, 0.0)
        if first > 0.0 and total > 10.0 * first:
            logger.warning("stage %d subgradient norms grew beyond 10x their "
                           "first-5-iteration maximum (%.3g vs %.3g)", t, total, first)
    if status == STATUS_INFEASIBLE:
        return RunResult(status=status, reports=reports, pools=driver.pools,
                         iters=k, diagnostics=diagnostics)
    final = driver.stage1
    gap = None
    if mode in ("final", "every"):
        oracle_value = _oracle_value(problem)
        gap = oracle_value - final.value
        logger.info("final lower bound %.12g, oracle %.12g, gap %.3e",
                    final.value, oracle_value, gap)
    return RunResult(status=status, reports=reports, pools=driver.pools,
                     final_lower_bound=final.value, final_x1=final.x.copy(),
                     iters=len(reports), diagnostics=diagnostics,
                     oracle_value=oracle_value, oracle_gap=gap)
