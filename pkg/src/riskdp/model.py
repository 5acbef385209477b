"""Problem data model: multistage stochastic LPs on lattices and trees.

A problem has ``T`` decision stages with decision vectors of dimension ``n``.
Stage-t data (one entry per realization of the stage-t noise) consists of

* a piecewise-linear convex cost over the concatenated decisions ``x_{1:t}``
  (max of affine pieces),
* an equality system ``sum_{tau=0..t} A_tau x_tau = b`` linking the current
  decision to the fixed initial vector ``x_0`` and the decision history,
* optional affine inequalities ``G . (x_0, x_1, ..., x_t) <= h``,
* a compact per-coordinate box for ``x_t``.

Two layouts are supported: ``lattice`` (interstage independent — every stage-t
node sees the same realization list) and ``tree`` (general finite scenario
tree with per-node data; the root holds ``x_0`` and has the single
deterministic stage-1 node as its only child).

History vectors throughout this package are the full concatenation
``(x_0, x_1, ..., x_{t-1})`` of length ``t * n``; cost pieces exclude the
``x_0`` block (their coefficient vectors have length ``t * n`` over
``x_{1:t}``), while ``G`` includes it (``(t+1) * n`` columns).

Risk attachment conventions (documented in the README): in lattice form the
stage-s risk spec governs how stage-s realization values are aggregated when
seen from stage s-1 (stage 1's spec is unused — the first stage is
deterministic); in tree form a node's risk spec governs how its *children*
are aggregated (leaf specs are unused).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .risk import RiskConfigError, RiskSpec, validate_risk_set

logger = logging.getLogger(__name__)

LATTICE = "lattice"
TREE = "tree"


class ModelError(ValueError):
    """Structural problem-data error raised by assembly helpers."""


@dataclass
class PwlConvexCost:
    """Max-of-affine cost ``max_i <c_i, x_{1:t}> + d_i``.

    ``dim`` is the per-stage decision dimension ``n`` (needed to split the
    coefficient vectors into history and current blocks).
    """

    pieces_c: np.ndarray   # (P, t*n)
    pieces_d: np.ndarray   # (P,)
    dim: int

    def __post_init__(self) -> None:
        self.pieces_c = np.atleast_2d(np.asarray(self.pieces_c, dtype=float))
        self.pieces_d = np.asarray(self.pieces_d, dtype=float).reshape(-1)
        if self.pieces_c.shape[0] == 0:
            raise ModelError("cost needs at least one piece")
        if self.pieces_c.shape[0] != self.pieces_d.shape[0]:
            raise ModelError("piece coefficient/offset counts differ")

    @property
    def n_pieces(self) -> int:
        return self.pieces_c.shape[0]


def evaluate_cost_and_history_subgradient(cost: PwlConvexCost, x) -> tuple[float, np.ndarray]:
    """Evaluate the cost at ``x = (x_1, ..., x_t)`` and return a history slope.

    Returns
    -------
    (value, subgrad)
        ``value`` is the max over pieces; ``subgrad`` is the ``x_{1:t-1}``
        block of the lowest-index active piece.  That block is always a valid
        subgradient of the partial map ``x_{1:t-1} -> cost(x_{1:t-1}, x_t)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != cost.pieces_c.shape[1]:
        raise ModelError(f"cost expects {cost.pieces_c.shape[1]} coordinates, got {x.shape[0]}")
    vals = cost.pieces_c @ x + cost.pieces_d
    i = int(np.argmax(vals))  # first maximizer = lowest index
    hist_len = x.shape[0] - cost.dim
    return float(vals[i]), cost.pieces_c[i, :hist_len].copy()


@dataclass
class Realization:
    """One stage-t realization (or tree-node) payload."""

    prob: float
    cost: PwlConvexCost
    a_blocks: list[np.ndarray]          # t+1 matrices, each (q, n); index 0 is the x_0 block
    b: np.ndarray                       # (q,)
    g: np.ndarray                       # (r, (t+1)*n) including the x_0 block
    h: np.ndarray                       # (r,)
    lb: np.ndarray                      # (n,)
    ub: np.ndarray                      # (n,)

    def __post_init__(self) -> None:
        self.a_blocks = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.a_blocks]
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float)) if np.size(self.g) else \
            np.zeros((0, 0))
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)

    def violations(self, t: int, n: int, where: str) -> list[str]:
        out = []
        q = self.b.shape[0]
        if q == 0 and len(self.a_blocks) == 0:
            pass  # no equality system at all
        elif len(self.a_blocks) != t + 1:
            out.append(f"{where}: expected {t + 1} equality blocks, found {len(self.a_blocks)}")
        else:
            for tau, a in enumerate(self.a_blocks):
                if a.shape != (q, n) and not (q == 0 and a.size == 0):
                    out.append(f"{where}: equality block {tau} has shape {a.shape}, expected {(q, n)}")
        if self.cost.dim != n or self.cost.pieces_c.shape[1] != t * n:
            out.append(f"{where}: cost pieces must have {t * n} coordinates")
        if not np.all(np.isfinite(self.cost.pieces_c)) or not np.all(np.isfinite(self.cost.pieces_d)):
            out.append(f"{where}: cost pieces contain non-finite entries")
        r = self.h.shape[0]
        if r or self.g.size:
            if self.g.shape != (r, (t + 1) * n):
                out.append(f"{where}: G has shape {self.g.shape}, expected {(r, (t + 1) * n)}")
        if self.lb.shape[0] != n or self.ub.shape[0] != n:
            out.append(f"{where}: box must have {n} coordinates")
        elif not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            out.append(f"{where}: non-compact decision set (box must be finite)")
        elif np.any(self.lb > self.ub):
            out.append(f"{where}: box lower exceeds upper")
        if not np.all(np.isfinite(self.b)) or not np.all(np.isfinite(self.h)):
            out.append(f"{where}: right-hand sides must be finite")
        if not (self.prob > 0.0):
            out.append(f"{where}: probability must be strictly positive")
        return out


@dataclass
class Stage:
    """Lattice stage: shared realization list plus the stage's risk spec."""

    realizations: list[Realization]
    risk: RiskSpec = field(default_factory=RiskSpec)


@dataclass
class Node:
    """Tree node; ``payload`` is None only for the root (which holds no decision)."""

    id: int
    parent: int | None
    prob: float = 1.0
    payload: Realization | None = None
    risk: RiskSpec = field(default_factory=RiskSpec)


@dataclass
class Problem:
    """A validated multistage problem (see module docstring for conventions)."""

    horizon: int
    dim: int
    x0: np.ndarray
    form: str = LATTICE
    stages: list[Stage] = field(default_factory=list)
    nodes: list[Node] = field(default_factory=list)
    lower_value_bound: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.lower_value_bound = np.asarray(self.lower_value_bound, dtype=float).reshape(-1)
        if self.form == TREE:
            self._index_tree()

    # -- tree bookkeeping --------------------------------------------------

    def _index_tree(self) -> None:
        self._by_id = {node.id: node for node in self.nodes}
        self._children: dict[int, list[int]] = {node.id: [] for node in self.nodes}
        roots = []
        for node in self.nodes:
            if node.parent is None:
                roots.append(node.id)
            elif node.parent in self._children:
                self._children[node.parent].append(node.id)
        self._roots = roots
        self._depth: dict[int, int] = {}
        if len(roots) == 1:
            frontier = [(roots[0], 0)]
            while frontier:
                nid, d = frontier.pop()
                if nid in self._depth:   # repeated visit: not a tree
                    self._depth.clear()
                    return
                self._depth[nid] = d
                frontier.extend((c, d + 1) for c in self._children[nid])

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def children(self, node_id: int) -> list[int]:
        return self._children[node_id]

    @property
    def root_id(self) -> int:
        return self._roots[0]

    def depth(self, node_id: int) -> int:
        return self._depth[node_id]

    def nodes_at_depth(self, d: int) -> list[int]:
        return [nid for nid in sorted(self._depth) if self._depth[nid] == d]

    # -- shared accessors --------------------------------------------------

    def z_lower(self, t: int) -> float:
        """Certified lower bound on the stage-(t+1) recourse value (0 past the horizon)."""
        if t >= self.horizon:
            return 0.0
        return float(self.lower_value_bound[t - 1])

    def stage_probs(self, t: int) -> np.ndarray:
        return np.array([r.prob for r in self.stages[t - 1].realizations])

    def child_probs(self, node_id: int) -> np.ndarray:
        return np.array([self._by_id[c].prob for c in self._children[node_id]])


@dataclass
class SubproblemData:
    """Stage subproblem with the history folded into right-hand sides.

    The ``*_hist`` matrices keep the coefficient blocks of the *decision*
    history ``x_{1:t-1}`` (the fixed ``x_0`` block is already absorbed into
    the constants); they are what cut assembly differentiates against.
    """

    t: int
    realization: int
    piece_cur: np.ndarray    # (P, n)
    piece_const: np.ndarray  # (P,)
    piece_hist: np.ndarray   # (P, (t-1)*n)
    a_cur: np.ndarray        # (q, n)
    eq_rhs: np.ndarray       # (q,)
    a_hist: np.ndarray       # (q, (t-1)*n)
    g_cur: np.ndarray        # (r, n)
    ineq_rhs: np.ndarray     # (r,)
    g_hist: np.ndarray       # (r, (t-1)*n)
    lb: np.ndarray
    ub: np.ndarray
    history: np.ndarray      # (t*n,) = (x_0, x_1, ..., x_{t-1}) as supplied


def assemble_subproblem(p: Problem, where, history) -> SubproblemData:
    """Fold a fixed history into one realization's data.

    Parameters
    ----------
    p : Problem
    where : tuple (t, j) in lattice form, or a node id in tree form.
    history : array, length ``t * n``
        Full history ``(x_0, x_1, ..., x_{t-1})``.

    Returns
    -------
    SubproblemData
        Pure function of its inputs (bit-identical outputs for identical
        inputs).
    """
    n = p.dim
    if p.form == LATTICE:
        t, j = where
        payload = p.stages[t - 1].realizations[j]
        rid = j
    else:
        node = p.node(where)
        t = p.depth(where)
        payload = node.payload
        rid = where
        if payload is None:
            raise ModelError("the root node holds no subproblem")
    history = np.asarray(history, dtype=float).reshape(-1)
    if history.shape[0] != t * n:
        raise ModelError(f"history must have {t * n} coordinates at stage {t}, got {history.shape[0]}")
    dec_hist = history[n:]                    # x_{1:t-1}
    q = payload.b.shape[0]
    a_cur = payload.a_blocks[t] if q else np.zeros((0, n))
    if q:
        a_hist_full = (np.hstack(payload.a_blocks[:t]) if t
                       else np.zeros((q, 0)))
        eq_rhs = payload.b - a_hist_full @ history
        a_hist = a_hist_full[:, n:]
    else:
        eq_rhs = payload.b
        a_hist = np.zeros((0, (t - 1) * n))
    r = payload.h.shape[0]
    if r:
        g_full = payload.g
        g_cur = g_full[:, t * n:]
        ineq_rhs = payload.h - g_full[:, :t * n] @ history
        g_hist = g_full[:, n:t * n]
    else:
        g_cur = np.zeros((0, n))
        ineq_rhs = payload.h
        g_hist = np.zeros((0, (t - 1) * n))
    hist_len = (t - 1) * n
    piece_hist = payload.cost.pieces_c[:, :hist_len]
    piece_cur = payload.cost.pieces_c[:, hist_len:]
    piece_const = payload.cost.pieces_d + piece_hist @ dec_hist
    return SubproblemData(t=t, realization=rid,
                          piece_cur=piece_cur.copy(), piece_const=piece_const,
                          piece_hist=piece_hist.copy(),
                          a_cur=np.atleast_2d(a_cur), eq_rhs=eq_rhs, a_hist=np.atleast_2d(a_hist),
                          g_cur=np.atleast_2d(g_cur), ineq_rhs=ineq_rhs, g_hist=np.atleast_2d(g_hist),
                          lb=payload.lb, ub=payload.ub, history=history.copy())


def validate_problem(p: Problem) -> list[str]:
    """Return a list of violation messages (empty list = valid problem)."""
    out: list[str] = []
    if p.horizon < 1:
        out.append("horizon must be >= 1")
    if p.dim < 1:
        out.append("dim must be >= 1")
    if p.x0.shape[0] != p.dim:
        out.append(f"x0 must have {p.dim} coordinates")
    expected_l = max(p.horizon - 1, 0)
    if p.lower_value_bound.shape[0] != expected_l:
        out.append(f"lower_value_bound must list {expected_l} values (stages 2..T)")
    elif not np.all(np.isfinite(p.lower_value_bound)):
        out.append("lower_value_bound entries must be finite")
    if p.form == LATTICE:
        out.extend(_validate_lattice(p))
    elif p.form == TREE:
        out.extend(_validate_tree(p))
    else:
        out.append(f"unknown form {p.form!r}")
    return out


def _validate_lattice(p: Problem) -> list[str]:
    out: list[str] = []
    if len(p.stages) != p.horizon:
        out.append(f"expected {p.horizon} stages, found {len(p.stages)}")
        return out
    if len(p.stages[0].realizations) != 1:
        out.append("stage 1 must have exactly one realization (deterministic first stage)")
    for s, stage in enumerate(p.stages, start=1):
        if not stage.realizations:
            out.append(f"stage {s}: no realizations")
            continue
        probs = np.array([r.prob for r in stage.realizations])
        if np.any(probs <= 0.0):
            out.append(f"stage {s}: probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            out.append(f"stage {s}: probabilities sum != 1")
        for j, payload in enumerate(stage.realizations):
            out.extend(payload.violations(s, p.dim, f"stage {s} realization {j}"))
        if s >= 2:
            try:
                validate_risk_set(stage.risk, probs / probs.sum())
            except RiskConfigError as exc:
                out.append(f"stage {s}: risk spec invalid: {exc}")
    return out


def _validate_tree(p: Problem) -> list[str]:
    out: list[str] = []
    if not p.nodes:
        return ["tree form requires nodes"]
    ids = [node.id for node in p.nodes]
    if len(set(ids)) != len(ids):
        out.append("duplicate node ids")
        return out
    if len(p._roots) != 1:
        out.append(f"expected exactly one root, found {len(p._roots)}")
        return out
    if not p._depth or len(p._depth) != len(p.nodes):
        out.append("node set is not a connected acyclic tree")
        return out
    root = p.root_id
    if len(p.children(root)) != 1:
        out.append("the root must have exactly one child (deterministic first stage)")
    for node in p.nodes:
        d = p.depth(node.id)
        kids = p.children(node.id)
        if d < p.horizon and not kids:
            out.append(f"node {node.id}: leaf at depth {d}, expected all leaves at depth {p.horizon}")
        if d == p.horizon and kids:
            out.append(f"node {node.id}: children beyond the horizon")
        if kids:
            probs = p.child_probs(node.id)
            if np.any(probs <= 0.0):
                out.append(f"node {node.id}: child probabilities must be strictly positive")
            if abs(probs.sum() - 1.0) > 1e-9:
                out.append(f"node {node.id}: child probabilities sum != 1")
            elif d >= 1:
                try:
                    validate_risk_set(node.risk, probs / probs.sum())
                except RiskConfigError as exc:
                    out.append(f"node {node.id}: risk spec invalid: {exc}")
        if node.id == root:
            continue
        if node.payload is None:
            out.append(f"node {node.id}: missing payload")
        else:
            out.extend(node.payload.violations(d, p.dim, f"node {node.id}"))
    return out
