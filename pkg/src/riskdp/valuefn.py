"""Subgradient assembly for parametric LP value functions.

A stage subproblem's optimal value, viewed as a function of the decision
history it was assembled against, is convex and piecewise linear.  This module
assembles a subgradient of that map from the subproblem data and the LP duals,
using the package-wide sign convention of module :mod:`riskdp.lp`:

``s = cost_term + eq_term + g_term + cut_term`` with

* ``cost_term = sum_i mu_i c_i,hist`` — the dual-weighted history blocks of the
  cost pieces (the epigraph-row multipliers sum to one at optimality, so this
  is a convex combination supported on active pieces);
* ``eq_term = -A_hist^T dual_eq`` — the equality system's history blocks;
* ``g_term = G_hist^T mu_G`` — static inequality rows;
* ``cut_term = sum_l mu_l beta1_l + sum_l mu~_l beta~1_l`` — history blocks of
  the optimality- and feasibility-cut rows.

Multipliers of the variable box never appear: box constraints carry no history
dependence.  Tiny multipliers (below :data:`MU_ZERO_TOL`) are zeroed before
assembly so that only rows active at the solution contribute.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lp import LpSolution, OPTIMAL
from .model import SubproblemData

logger = logging.getLogger(__name__)

MU_ZERO_TOL = 1e-9   # inequality multipliers below this are treated as inactive
CHECK_TOL = 1e-7     # default slack in check_subgradient


@dataclass
class ValueSubgradient:
    """Assembled history subgradient with its additive components retained."""

    s: np.ndarray
    cost_term: np.ndarray
    eq_term: np.ndarray
    g_term: np.ndarray
    cut_term: np.ndarray


def assemble_pi(sub: SubproblemData, sol: LpSolution, view,
                cost_subgrad: np.ndarray | None = None) -> ValueSubgradient:
    """Assemble a subgradient of the subproblem value w.r.t. its history.

    Parameters
    ----------
    sub : SubproblemData
        The assembled subproblem (provides the history-block matrices).
    sol : LpSolution
        Optimal solution of the subproblem LP whose inequality rows are
        ordered [g rows][cost-piece rows][optimality-cut rows][feasibility-cut
        rows].
    view : PoolView
        The cut rows the LP was built with (provides their history blocks).
    cost_subgrad : array, optional
        Override for the cost term.  By default the term is the dual-weighted
        combination of the piece history blocks, which is the choice that
        makes ``s`` a genuine subgradient of the *value* function even when
        the optimum sits on a cost kink whose pieces differ in their history
        blocks.

    Returns
    -------
    ValueSubgradient
        ``s`` over the decision history ``x_{1:t-1}``; satisfies the
        subgradient inequality for the subproblem value at the anchor history.
    """
    if sol.status != OPTIMAL:
        raise ValueError(f"cannot assemble a subgradient from status {sol.status!r}")
    n_g = sub.g_cur.shape[0]
    n_p = sub.piece_cur.shape[0]
    n_opt = view.opt_beta1.shape[0]
    n_feas = view.feas_beta1.shape[0]
    mu = sol.dual_ineq.copy()
    if mu.shape[0] != n_g + n_p + n_opt + n_feas:
        raise ValueError(f"dual vector has {mu.shape[0]} rows, layout expects "
                         f"{n_g}+{n_p}+{n_opt}+{n_feas}")
    mu[mu < MU_ZERO_TOL] = 0.0
    mu_g = mu[:n_g]
    mu_p = mu[n_g:n_g + n_p]
    mu_opt = mu[n_g + n_p:n_g + n_p + n_opt]
    mu_feas = mu[n_g + n_p + n_opt:]
    hist_dim = sub.a_hist.shape[1]
    if cost_subgrad is None:
        cost_term = mu_p @ sub.piece_hist
    else:
        cost_term = np.asarray(cost_subgrad, dtype=float).reshape(hist_dim)
    eq_term = -(sub.a_hist.T @ sol.dual_eq) if sub.a_hist.shape[0] else np.zeros(hist_dim)
    g_term = sub.g_hist.T @ mu_g if n_g else np.zeros(hist_dim)
    cut_term = np.zeros(hist_dim)
    if n_opt:
        cut_term = cut_term + view.opt_beta1.T @ mu_opt
    if n_feas:
        cut_term = cut_term + view.feas_beta1.T @ mu_feas
    s = cost_term + eq_term + g_term + cut_term
    return ValueSubgradient(s=s, cost_term=cost_term, eq_term=eq_term,
                            g_term=g_term, cut_term=cut_term)


def subgradient_bound(m_hi: float, m_lo: float, eps: float) -> float:
    """Norm bound ``(m_hi - m_lo) / eps`` for subgradients of a convex function
    with values in ``[m_lo, m_hi]`` on an ``eps``-enlargement of its domain."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if m_hi < m_lo:
        raise ValueError("upper value bound below lower value bound")
    return (m_hi - m_lo) / eps


def check_subgradient(q_eval, x0, s, n_samples: int = 100, radius: float = 1.0,
                      tol: float = CHECK_TOL, seed: int = 0,
                      lower=None, upper=None) -> list[dict]:
    """Sample-test the subgradient inequality ``Q(x) >= Q(x0) + <s, x - x0>``.

    Points are drawn uniformly from the max-norm ball of the given radius
    around ``x0``, clipped to ``[lower, upper]`` when bounds are supplied;
    samples where ``q_eval`` returns a non-finite value are skipped.

    Returns
    -------
    list of dict
        One entry per violation beyond ``tol``, with keys ``x``, ``value``,
        ``bound`` and ``gap``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    s = np.asarray(s, dtype=float).reshape(-1)
    base = float(q_eval(x0))
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        x = x0 + rng.uniform(-radius, radius, size=x0.shape[0])
        if lower is not None:
            x = np.maximum(x, lower)
        if upper is not None:
            x = np.minimum(x, upper)
        val = float(q_eval(x))
        if not np.isfinite(val):
            continue
        bound = base + float(s @ (x - x0))
        if val < bound - tol:
            out.append({"x": x, "value": val, "bound": bound, "gap": bound - val})
    return out
