"""Independent reference solvers for desk-scale instances.

Two routes compute ground truth without touching the cutting-plane drivers'
arithmetic:

* :func:`extensive_form_value` — the deterministic equivalent of a
  risk-neutral instance as one monolithic LP, solved by an external
  simplex/barrier implementation (the only place the package relies on one);
* :func:`exact_nested_decomposition` — sweep-based nested decomposition that
  visits *every* node each sweep (no sampling) and stops only when the
  first-stage value repeats and a full sweep produces no new distinct cut.
  It handles every supported risk spec.

:func:`true_recourse_value` evaluates the exact risk-adjusted
recourse function at an arbitrary history by conditioning the tail problem
on that history and handing the reduced instances to the routes above;
infeasible histories report ``+inf``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .cuts import build_optimality_cut
from .engine import EngineError, PoolSet, solve_node
from .model import (LATTICE, TREE, ModelError, Node, Problem, PwlConvexCost,
                    Realization, Stage)
from .risk import RiskSpec, risk_value_and_density

MAX_SWEEPS = 10_000
VALUE_REPEAT_TOL = 1e-10
CUT_DISTINCT_TOL = 1e-11


class OracleError(RuntimeError):
    """Reference computation failed or was asked for an unsupported case."""


@dataclass
class NDResult:
    value: float
    sweeps: int
    n_cuts: int


# ---------------------------------------------------------------------------
# extensive form
# ---------------------------------------------------------------------------

@dataclass
class _Rec:
    key: object
    parent: object
    depth: int
    payload: Realization
    abs_prob: float


def _scenario_records(problem: Problem) -> list[_Rec]:
    """Explicit node records for either form (lattice paths become nodes)."""
    records: list[_Rec] = []
    if problem.form == TREE:
        for node in problem.nodes:
            if node.parent is None:
                continue
            prob = node.prob
            cursor = problem.node(node.parent)
            while cursor.parent is not None:
                prob *= cursor.prob
                cursor = problem.node(cursor.parent)
            records.append(_Rec(key=node.id, parent=node.parent,
                                depth=problem.depth(node.id),
                                payload=node.payload, abs_prob=prob))
        return records
    root_key = ()
    for t in range(1, problem.horizon + 1):
        reals = problem.stages[t - 1].realizations
        if t == 1:
            records.append(_Rec(key=(0,), parent=root_key, depth=1,
                                payload=reals[0], abs_prob=1.0))
            continue
        parents = [r for r in records if r.depth == t - 1]
        for parent in parents:
            for j, real in enumerate(reals):
                records.append(_Rec(key=parent.key + (j,), parent=parent.key,
                                    depth=t, payload=real,
                                    abs_prob=parent.abs_prob * real.prob))
    return records


def extensive_form_value(problem: Problem) -> float:
    """Optimal value of the risk-neutral deterministic equivalent.

    Builds one LP with a decision and a cost-epigraph variable per scenario
    node and solves it with an external implementation.  Only expectation
    risk specs are supported — any other spec changes the objective in a way
    a single probability-weighted LP cannot express.  Returns ``+inf`` when
    the instance is infeasible.
    """
    _require_expectation(problem)
    n = problem.dim
    records = _scenario_records(problem)
    by_key = {r.key: r for r in records}
    offset: dict[object, int] = {}
    ncols = 0
    for rec in records:
        offset[rec.key] = ncols
        ncols += n + 1  # x_m and w_m
    c = np.zeros(ncols)
    lower = np.full(ncols, -np.inf)
    upper = np.full(ncols, np.inf)
    for rec in records:
        o = offset[rec.key]
        c[o + n] = rec.abs_prob
        lower[o:o + n] = rec.payload.lb
        upper[o:o + n] = rec.payload.ub

    def path_keys(rec: _Rec) -> list[object]:
        keys = []
        cursor: object = rec.key
        while cursor in by_key:
            keys.append(cursor)
            cursor = by_key[cursor].parent
        keys.reverse()
        return keys

    eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []
    for rec in records:
        keys = path_keys(rec)
        pay = rec.payload
        d = rec.depth
        q = pay.b.shape[0]
        if q:
            rhs = pay.b - pay.a_blocks[0] @ problem.x0
            for i in range(q):
                row = np.zeros(ncols)
                for sigma, key in enumerate(keys, start=1):
                    row[offset[key]:offset[key] + n] = pay.a_blocks[sigma][i]
                eq_rows.append(row)
                eq_rhs.append(rhs[i])
        r = pay.h.shape[0]
        if r:
            rhs = pay.h - pay.g[:, :n] @ problem.x0
            for i in range(r):
                row = np.zeros(ncols)
                for sigma, key in enumerate(keys, start=1):
                    row[offset[key]:offset[key] + n] = \
                        pay.g[i, sigma * n:(sigma + 1) * n]
                ub_rows.append(row)
                ub_rhs.append(rhs[i])
        for i in range(pay.cost.n_pieces):
            row = np.zeros(ncols)
            for sigma, key in enumerate(keys, start=1):
                row[offset[key]:offset[key] + n] = \
                    pay.cost.pieces_c[i, (sigma - 1) * n:sigma * n]
            row[offset[rec.key] + n] = -1.0
            ub_rows.append(row)
            ub_rhs.append(-pay.cost.pieces_d[i])
    res = scipy.optimize.linprog(
        c,
        A_eq=np.vstack(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rows else None,
        A_ub=np.vstack(ub_rows) if ub_rows else None,
        b_ub=np.array(ub_rhs) if ub_rows else None,
        bounds=list(zip(lower, upper)), method="highs")
    if res.status == 2:
        return math.inf
    if res.status != 0:
        raise OracleError(f"extensive-form solve failed: {res.message}")
    return float(res.fun)


def _require_expectation(problem: Problem) -> None:
    for spec in _risk_specs(problem):
        if spec.kind != "expectation":
            raise OracleError(
                "the extensive form covers expectation instances only; use "
                "exact_nested_decomposition for risk-averse specs")


def _risk_specs(problem: Problem):
    if problem.form == LATTICE:
        for stage in problem.stages[1:]:
            yield stage.risk
    else:
        for node in problem.nodes:
            if problem.children(node.id) and node.parent is not None:
                yield node.risk


# ---------------------------------------------------------------------------
# exact nested decomposition
# ---------------------------------------------------------------------------

def _distinct(pool, theta: float, beta: np.ndarray) -> bool:
    for cut in pool.optimality:
        if (abs(cut.theta - theta) <= CUT_DISTINCT_TOL
                and np.max(np.abs(cut.beta - beta), initial=0.0) <= CUT_DISTINCT_TOL):
            return False
    return True


def exact_nested_decomposition(problem: Problem, max_sweeps: int = MAX_SWEEPS) -> NDResult:
    """Sampling-free nested decomposition to convergence.

    Each sweep makes a forward pass visiting every node of the (expanded)
    tree, then a backward pass appending one cut per visited history.  A cut
    numerically identical to one already pooled is skipped; the run stops
    when the first-stage value repeats within ``1e-10`` and a sweep adds no
    distinct cut.  With finitely many LP bases this terminates at the exact
    value.
    """
    pools = PoolSet(problem)
    n = problem.dim
    value_prev = None
    n_cuts = 0
    for sweep in range(1, max_sweeps + 1):
        histories = _forward_all(problem, pools)
        added = 0
        for t in range(problem.horizon, 1, -1):
            for hist, where_list, probs, spec, target_key in \
                    _parents_at(problem, t, histories):
                sols = [solve_node(problem, w, hist, pools) for w in where_list]
                cut = build_optimality_cut(
                    [s.value for s in sols], [s.pi for s in sols], probs, spec,
                    hist[n:], stage=target_key, iteration=sweep)
                target = pools.opt[target_key]
                if _distinct(target, cut.theta, cut.beta):
                    target.append_optimality(cut)
                    added += 1
        n_cuts += added
        value = _first_stage_value(problem, pools)
        if (value_prev is not None and abs(value - value_prev) <= VALUE_REPEAT_TOL
                and added == 0):
            return NDResult(value=value, sweeps=sweep, n_cuts=n_cuts)
        value_prev = value
    raise OracleError(f"nested decomposition did not settle in {max_sweeps} sweeps")


def _first_stage_value(problem: Problem, pools: PoolSet) -> float:
    if problem.form == LATTICE:
        where: object = (1, 0)
    else:
        where = problem.children(problem.root_id)[0]
    return solve_node(problem, where, problem.x0, pools).value


def _forward_all(problem: Problem, pools: PoolSet) -> dict:
    """Histories of every node after one all-node forward pass.

    Keys are lattice path tuples (realization indices) or tree node ids; the
    value stored for a node is the history *including* the node's decision.
    """
    n = problem.dim
    histories: dict = {}
    if problem.form == LATTICE:
        first = solve_node(problem, (1, 0), problem.x0, pools)
        histories[(0,)] = np.concatenate([problem.x0, first.x])
        for t in range(2, problem.horizon + 1):
            reals = range(len(problem.stages[t - 1].realizations))
            for key in [k for k in histories if len(k) == t - 1]:
                for j in reals:
                    ns = solve_node(problem, (t, j), histories[key], pools)
                    histories[key + (j,)] = np.concatenate([histories[key], ns.x])
    else:
        order = sorted((problem.depth(m.id), m.id) for m in problem.nodes
                       if m.parent is not None)
        for _, mid in order:
            parent = problem.node(mid).parent
            base = (np.asarray(problem.x0, dtype=float)
                    if parent == problem.root_id else histories[parent])
            ns = solve_node(problem, mid, base, pools)
            histories[mid] = np.concatenate([base, ns.x])
    return histories


def _parents_at(problem: Problem, t: int, histories: dict):
    """(history, children, probs, risk, pool key) per stage-(t-1) node."""
    if problem.form == LATTICE:
        probs = problem.stage_probs(t)
        spec = problem.stages[t - 1].risk
        wheres = [(t, j) for j in range(probs.shape[0])]
        for key, hist in histories.items():
            if len(key) == t - 1:
                yield hist, wheres, probs, spec, t
    else:
        for node in problem.nodes:
            if node.parent is None or problem.depth(node.id) != t - 1:
                continue
            kids = problem.children(node.id)
            yield (histories[node.id], kids, problem.child_probs(node.id),
                   node.risk, node.id)


# ---------------------------------------------------------------------------
# conditioning on a history
# ---------------------------------------------------------------------------

def _conditioned_payload(pay: Realization, t: int, tau: int, n: int,
                         history: np.ndarray) -> Realization:
    """Re-root a stage-``tau`` payload at stage ``t``: fold ``x_{0:t-1}`` in.

    The reduced payload's stage index is ``tau - t + 1`` and its block-0
    (initial state) columns are zero — the fixed prefix moves into the
    right-hand sides and cost offsets.
    """
    dec_hist = history[n:]
    q = pay.b.shape[0]
    if q:
        a_blocks = [np.zeros((q, n))] + [pay.a_blocks[s] for s in range(t, tau + 1)]
        b = pay.b - np.hstack(pay.a_blocks[:t]) @ history
    else:
        a_blocks, b = [], pay.b
    r = pay.h.shape[0]
    if r:
        g = np.hstack([np.zeros((r, n)), pay.g[:, t * n:]])
        h = pay.h - pay.g[:, :t * n] @ history
    else:
        g, h = np.zeros((0, 0)), pay.h
    keep = pay.cost.pieces_c[:, (t - 1) * n:]
    d = pay.cost.pieces_d + pay.cost.pieces_c[:, :(t - 1) * n] @ dec_hist
    cost = PwlConvexCost(pieces_c=keep, pieces_d=d, dim=n)
    return Realization(prob=1.0, cost=cost, a_blocks=a_blocks, b=b, g=g, h=h,
                       lb=pay.lb.copy(), ub=pay.ub.copy())


def conditioned_problem(problem: Problem, t: int, j: int,
                        history: np.ndarray) -> Problem:
    """Tail problem started at stage-``t`` realization ``j`` under ``history``.

    Lattice form only.  The reduced instance has horizon ``T - t + 1``, a
    deterministic first stage (the chosen realization), and the original
    deeper stages with the fixed prefix folded into their data.
    """
    if problem.form != LATTICE:
        raise OracleError("conditioning on (t, j) applies to lattice form")
    n = problem.dim
    history = np.asarray(history, dtype=float).reshape(-1)
    if history.shape[0] != t * n:
        raise ModelError(f"history must have {t * n} coordinates at stage {t}")
    first_pay = _conditioned_payload(problem.stages[t - 1].realizations[j],
                                     t, t, n, history)
    stages = [Stage([first_pay])]
    for tau in range(t + 1, problem.horizon + 1):
        stage = problem.stages[tau - 1]
        reals = []
        for pay in stage.realizations:
            reduced = _conditioned_payload(pay, t, tau, n, history)
            reduced.prob = pay.prob
            reals.append(reduced)
        stages.append(Stage(reals, risk=stage.risk))
    return Problem(horizon=problem.horizon - t + 1, dim=n, x0=np.zeros(n),
                   stages=stages,
                   lower_value_bound=problem.lower_value_bound[t - 1:])


def conditioned_subtree(problem: Problem, node_id: int,
                        history: np.ndarray) -> Problem:
    """Tail problem rooted at one tree node under ``history`` (tree form)."""
    if problem.form != TREE:
        raise OracleError("conditioning on a node applies to tree form")
    n = problem.dim
    t = problem.depth(node_id)
    history = np.asarray(history, dtype=float).reshape(-1)
    if history.shape[0] != t * n:
        raise ModelError(f"history must have {t * n} coordinates at depth {t}")
    nodes = [Node(id=0, parent=None)]
    mapping = {node_id: 1}
    queue = [node_id]
    next_id = 1
    while queue:
        mid = queue.pop(0)
        node = problem.node(mid)
        tau = problem.depth(mid)
        reduced = _conditioned_payload(node.payload, t, tau, n, history)
        nodes.append(Node(id=mapping[mid],
                          parent=0 if mid == node_id else mapping[node.parent],
                          prob=1.0 if mid == node_id else node.prob,
                          payload=reduced, risk=node.risk))
        for kid in problem.children(mid):
            next_id += 1
            mapping[kid] = next_id
            queue.append(kid)
    return Problem(horizon=problem.horizon - t + 1, dim=n, x0=np.zeros(n),
                   form=TREE, nodes=nodes,
                   lower_value_bound=problem.lower_value_bound[t - 1:])


def _tail_value(reduced: Problem) -> float:
    """Exact value of a reduced problem; ``+inf`` when infeasible."""
    try:
        for spec in _risk_specs(reduced):
            if spec.kind != "expectation":
                break
        else:
            return extensive_form_value(reduced)
        return exact_nested_decomposition(reduced).value
    except EngineError:
        return math.inf


def true_recourse_value(problem: Problem, where, history) -> float:
    """Exact risk-adjusted recourse aggregated at one history.

    Lattice: ``where`` is the child stage ``t`` and ``history`` is
    ``x_{0:t-1}``; the result is the stage-``t`` risk of the per-realization
    tail values.  Tree: ``where`` is a node id and ``history`` runs through
    that node's decision; the result aggregates its children under the
    node's risk spec.  Infeasible histories report ``+inf``.
    """
    history = np.asarray(history, dtype=float).reshape(-1)
    if problem.form == LATTICE:
        t = where
        if t > problem.horizon:
            return 0.0
        probs = problem.stage_probs(t)
        spec = problem.stages[t - 1].risk
        values = [ _tail_value(conditioned_problem(problem, t, j, history))
                   for j in range(probs.shape[0]) ]
    else:
        kids = problem.children(where)
        if not kids:
            return 0.0
        probs = problem.child_probs(where)
        spec = problem.node(where).risk
        values = [ _tail_value(conditioned_subtree(problem, kid, history))
                   for kid in kids ]
    if any(math.isinf(v) for v in values):
        return math.inf
    value, _ = risk_value_and_density(spec, probs, np.asarray(values))
    return value


def reference_value(problem: Problem) -> float:
    """Ground-truth optimal value by the most direct available route."""
    for spec in _risk_specs(problem):
        if spec.kind != "expectation":
            return exact_nested_decomposition(problem).value
    return extensive_form_value(problem)


def grid_minimum(fun, lb, ub, points: int = 2001) -> float:
    """Brute-force minimum of a scalar function over a box grid (<= 2 dims)."""
    lb = np.asarray(lb, dtype=float).reshape(-1)
    ub = np.asarray(ub, dtype=float).reshape(-1)
    if lb.shape[0] > 2:
        raise OracleError("grid search supports at most two dimensions")
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(lb, ub)]
    best = math.inf
    for point in itertools.product(*axes):
        best = min(best, fun(np.array(point)))
    return best
