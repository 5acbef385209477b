"""Tests for the bounded-variable simplex solver."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from riskdp import lp

ATOL = 1e-8


def test_single_equality_dual():
    # min x  s.t.  x = 3, x free  ->  optimum 3, dual_eq measures d(value)/d(rhs) = 1
    prob = lp.LpProblem(c=[1.0], a_eq=[[1.0]], b_eq=[3.0])
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    assert sol.x[0] == pytest.approx(3.0, abs=ATOL)
    assert sol.objective == pytest.approx(3.0, abs=ATOL)
    assert sol.dual_eq[0] == pytest.approx(1.0, abs=ATOL)


def test_fixed_variable_infeasible():
    # x fixed to zero by its box but the equality wants 1 -> infeasible
    prob = lp.LpProblem(c=[1.0], a_eq=[[1.0]], b_eq=[1.0], lower=[0.0], upper=[0.0])
    sol = lp.solve(prob)
    assert sol.status == lp.INFEASIBLE
    assert sol.x is None


def test_elastic_feasibility_program():
    # min y1+y2  s.t.  x + y1 - y2 = 1.5,  x in [0,1],  y >= 0
    # The box caps x at 1, so 0.5 of slack is unavoidable; marginal value of
    # the right-hand side is +1.
    prob = lp.LpProblem(c=[0.0, 1.0, 1.0],
                        a_eq=[[1.0, 1.0, -1.0]], b_eq=[1.5],
                        lower=[0.0, 0.0, 0.0], upper=[1.0, np.inf, np.inf])
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    assert sol.objective == pytest.approx(0.5, abs=ATOL)
    assert sol.dual_eq[0] == pytest.approx(1.0, abs=ATOL)


def test_unbounded():
    prob = lp.LpProblem(c=[-1.0], lower=[0.0], upper=[np.inf])
    sol = lp.solve(prob)
    assert sol.status == lp.UNBOUNDED


def test_inequality_duals_sign():
    # min -x  s.t.  x <= 2, 0 <= x <= 10: multiplier of the row is 1 (>= 0),
    # and the optimal value -2 decreases when b_ub grows.
    prob = lp.LpProblem(c=[-1.0], a_ub=[[1.0]], b_ub=[2.0], lower=[0.0], upper=[10.0])
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    assert sol.x[0] == pytest.approx(2.0, abs=ATOL)
    assert sol.dual_ineq[0] == pytest.approx(1.0, abs=ATOL)
    assert sol.binding_ineq[0]
    # perturbation check: value(b+h) - value(b) = -h = -dual_ineq * h
    h = 0.25
    pert = lp.LpProblem(c=[-1.0], a_ub=[[1.0]], b_ub=[2.0 + h], lower=[0.0], upper=[10.0])
    assert lp.solve(pert).objective == pytest.approx(sol.objective - sol.dual_ineq[0] * h, abs=ATOL)


def test_beale_cycling_instance_bland():
    # Classic Dantzig-cycling example; Bland's rule must terminate well within
    # the crude bound of (number of bases) pivots.
    c = np.array([-0.75, 150.0, -0.02, 6.0])
    a_ub = np.array([
        [0.25, -60.0, -0.04, 9.0],
        [0.5, -90.0, -0.02, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    b_ub = np.array([0.0, 0.0, 1.0])
    prob = lp.LpProblem(c=c, a_ub=a_ub, b_ub=b_ub,
                        lower=np.zeros(4), upper=np.full(4, np.inf))
    sol = lp.solve_with_bland(prob)
    assert sol.status == lp.OPTIMAL
    assert sol.objective == pytest.approx(-0.05, abs=1e-9)
    assert sol.pivots <= 200
    ref = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)] * 4, method="highs")
    assert sol.objective == pytest.approx(ref.fun, abs=1e-9)
    # default solve (Dantzig + stall switch) must agree
    sol2 = lp.solve(prob)
    assert sol2.status == lp.OPTIMAL
    assert sol2.objective == pytest.approx(-0.05, abs=1e-9)


def test_equality_only_multirow():
    # two equations, three vars; compare against scipy
    c = np.array([1.0, 2.0, -1.0])
    a_eq = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    b_eq = np.array([2.0, 1.0])
    lo, up = np.full(3, -5.0), np.full(3, 5.0)
    prob = lp.LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, lower=lo, upper=up)
    sol = lp.solve(prob)
    ref = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=list(zip(lo, up)), method="highs")
    assert sol.status == lp.OPTIMAL
    assert sol.objective == pytest.approx(ref.fun, abs=1e-8)
    assert np.allclose(a_eq @ sol.x, b_eq, atol=1e-8)


def test_redundant_rows():
    # duplicated equality row: basis repair must freeze the redundant artificial
    prob = lp.LpProblem(c=[1.0, 1.0],
                        a_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0],
                        lower=[0.0, 0.0], upper=[2.0, 2.0])
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=ATOL)


def test_determinism_replay():
    rng = np.random.default_rng(7)
    c = rng.normal(size=6)
    a_eq = rng.normal(size=(2, 6))
    b_eq = rng.normal(size=2)
    a_ub = rng.normal(size=(3, 6))
    b_ub = rng.normal(size=3) + 2.0
    lo, up = np.full(6, -4.0), np.full(6, 4.0)
    sols = [lp.solve(lp.LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
                                  lower=lo, upper=up)) for _ in range(2)]
    assert sols[0].status == sols[1].status == lp.OPTIMAL
    assert sols[0].x.tobytes() == sols[1].x.tobytes()
    assert sols[0].dual_eq.tobytes() == sols[1].dual_eq.tobytes()
    assert sols[0].dual_ineq.tobytes() == sols[1].dual_ineq.tobytes()
    assert sols[0].pivots == sols[1].pivots


def _random_problem(seed: int) -> lp.LpProblem:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    q = int(rng.integers(0, min(n, 3) + 1))
    r = int(rng.integers(0, 4))
    c = rng.normal(size=n)
    lo = rng.uniform(-5.0, 0.0, size=n)
    up = lo + rng.uniform(0.5, 6.0, size=n)
    x_feas = rng.uniform(lo, up)  # plant a feasible point
    a_eq = rng.normal(size=(q, n))
    b_eq = a_eq @ x_feas
    a_ub = rng.normal(size=(r, n))
    b_ub = a_ub @ x_feas + rng.uniform(0.0, 2.0, size=r)
    return lp.LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub, lower=lo, upper=up)


@settings(max_examples=120, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_random_lp_against_scipy(seed):
    prob = _random_problem(seed)
    sol = lp.solve(prob)
    ref = linprog(prob.c, A_eq=prob.a_eq if prob.a_eq.size else None,
                  b_eq=prob.b_eq if prob.b_eq.size else None,
                  A_ub=prob.a_ub if prob.a_ub.size else None,
                  b_ub=prob.b_ub if prob.b_ub.size else None,
                  bounds=list(zip(prob.lower, prob.upper)), method="highs")
    assert ref.status == 0  # problems are feasible & bounded by construction
    assert sol.status == lp.OPTIMAL
    assert sol.objective == pytest.approx(ref.fun, abs=1e-6)
    # primal feasibility
    assert np.all(prob.lower - 1e-8 <= sol.x) and np.all(sol.x <= prob.upper + 1e-8)
    if prob.a_eq.size:
        assert np.allclose(prob.a_eq @ sol.x, prob.b_eq, atol=1e-7)
    if prob.a_ub.size:
        assert np.all(prob.a_ub @ sol.x <= prob.b_ub + 1e-7)


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_random_lp_kkt(seed):
    prob = _random_problem(seed)
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    assert np.all(sol.dual_ineq >= 0.0)
    # complementary slackness on inequality rows
    if prob.a_ub.size:
        slack = prob.b_ub - prob.a_ub @ sol.x
        assert np.all(np.abs(sol.dual_ineq * slack) <= 1e-6)
    # stationarity on coordinates strictly inside the box:
    # c - a_eq^T dual_eq + a_ub^T dual_ineq = 0 there
    grad = prob.c.copy()
    if prob.a_eq.size:
        grad = grad - prob.a_eq.T @ sol.dual_eq
    if prob.a_ub.size:
        grad = grad + prob.a_ub.T @ sol.dual_ineq
    interior = (sol.x > prob.lower + 1e-6) & (sol.x < prob.upper - 1e-6)
    assert np.all(np.abs(grad[interior]) <= 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_dual_eq_is_rhs_subgradient(seed):
    # value(b') >= value(b) + dual_eq . (b' - b) for random perturbations
    prob = _random_problem(seed)
    if prob.a_eq.shape[0] == 0:
        return
    sol = lp.solve(prob)
    assert sol.status == lp.OPTIMAL
    rng = np.random.default_rng(seed + 1)
    for _ in range(3):
        delta = rng.normal(scale=0.05, size=prob.b_eq.shape[0])
        pert = lp.LpProblem(c=prob.c, a_eq=prob.a_eq, b_eq=prob.b_eq + delta,
                            a_ub=prob.a_ub, b_ub=prob.b_ub,
                            lower=prob.lower, upper=prob.upper)
        psol = lp.solve(pert)
        if psol.status != lp.OPTIMAL:
            continue
        assert psol.objective >= sol.objective + sol.dual_eq @ delta - 1e-6


def test_validation_errors():
    with pytest.raises(ValueError):
        lp.LpProblem(c=[1.0, np.nan])
    with pytest.raises(ValueError):
        lp.LpProblem(c=[1.0], a_eq=[[1.0, 2.0]], b_eq=[0.0])
    with pytest.raises(ValueError):
        lp.LpProblem(c=[1.0], lower=[2.0], upper=[1.0])
