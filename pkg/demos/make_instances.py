"""Regenerate the shipped instance files under ``demos/instances/``.

Each builder returns a validated problem; running this script rewrites the
JSON files the demo scripts and the CLI walkthrough load.  All four are small
enough for the exact oracles, so every demo can compare the iterative solver
against ground truth.
"""

from pathlib import Path

import numpy as np

from riskdp import io, model
from riskdp.risk import RiskSpec

OUT = Path(__file__).resolve().parent / "instances"


def _linear(t, coeff):
    """Stage-t cost ``coeff * x_t`` (single piece, current decision only)."""
    c = np.zeros(t)
    c[-1] = coeff
    return model.PwlConvexCost(c.reshape(1, -1), np.zeros(1), dim=1)


def _demand_row(t, coeffs):
    """One row ``sum coeffs_s . x_s >= d`` written as ``G x <= h`` over x_{0:t}."""
    row = np.zeros(t + 1)
    for s, c in coeffs.items():
        row[s] = -c
    return row


def newsvendor():
    """Order now at unit cost, cover any shortfall after demand is revealed.

    Demand is 1 or 2 with equal probability; the recourse purchase x2 must
    satisfy x1 + x2 >= d.  Under the expectation the optimal value is 1.5.
    """
    stage1 = model.Stage([model.Realization(
        prob=1.0, cost=_linear(1, 1.0), a_blocks=[], b=np.zeros(0),
        g=np.zeros((0, 0)), h=np.zeros(0),
        lb=np.zeros(1), ub=np.array([2.0]))])
    outcomes = []
    for d in (1.0, 2.0):
        outcomes.append(model.Realization(
            prob=0.5, cost=_linear(2, 1.0), a_blocks=[], b=np.zeros(0),
            g=_demand_row(2, {1: 1.0, 2: 1.0}).reshape(1, -1),
            h=np.array([-d]), lb=np.zeros(1), ub=np.array([10.0])))
    return model.Problem(horizon=2, dim=1, x0=np.zeros(1),
                         stages=[stage1, model.Stage(outcomes)],
                         lower_value_bound=np.array([0.0]))


def inventory_mixture():
    """Three ordering rounds against demand that must be covered jointly.

    Each later stage requires x_t + x_{t-1} >= d with two equally likely
    demands, and both recourse stages aggregate their children with a
    half-expectation, half-tail mixture, so the solution hedges the worst
    branch harder than the plain expectation would.
    """
    mix = RiskSpec(kind="mixture", lam=0.5, epsilon=0.5)
    stage1 = model.Stage([model.Realization(
        prob=1.0, cost=_linear(1, 1.0), a_blocks=[], b=np.zeros(0),
        g=np.zeros((0, 0)), h=np.zeros(0),
        lb=np.zeros(1), ub=np.array([2.0]))])
    later = []
    for t, coeff, demands in ((2, 0.8, (0.6, 1.4)), (3, 1.2, (0.5, 1.8))):
        outcomes = [model.Realization(
            prob=0.5, cost=_linear(t, coeff), a_blocks=[], b=np.zeros(0),
            g=_demand_row(t, {t - 1: 1.0, t: 1.0}).reshape(1, -1),
            h=np.array([-d]), lb=np.zeros(1), ub=np.array([3.0]))
            for d in demands]
        later.append(model.Stage(outcomes, risk=mix))
    return model.Problem(horizon=3, dim=1, x0=np.zeros(1),
                         stages=[stage1] + later,
                         lower_value_bound=np.array([0.0, 0.0]))


def three_stage_chain():
    """Equalities that only reveal the stage-1 requirement two stages later.

    x2 = x1 and x3 = x2 - 1.5 with x3 in [0, 0.5] force x1 >= 1.5, but no
    single stage shows that: the solver has to cut at stage 3, backtrack,
    cut at stage 2, and only then constrain the first decision.  Lower the
    stage-1 upper bound below 1.5 and the instance becomes provably
    infeasible at the first iteration.
    """
    def eq(t, rows):
        blocks = [np.zeros((1, 1)) for _ in range(t + 1)]
        for s, c in rows.items():
            blocks[s] = np.array([[c]])
        return blocks

    stage1 = model.Stage([model.Realization(
        prob=1.0, cost=_linear(1, 1.0), a_blocks=[], b=np.zeros(0),
        g=np.zeros((0, 0)), h=np.zeros(0),
        lb=np.zeros(1), ub=np.array([2.0]))])
    stage2 = model.Stage([model.Realization(
        prob=1.0, cost=_linear(2, 0.1), a_blocks=eq(2, {1: -1.0, 2: 1.0}),
        b=np.zeros(1), g=np.zeros((0, 0)), h=np.zeros(0),
        lb=np.zeros(1), ub=np.array([2.0]))])
    stage3 = model.Stage([model.Realization(
        prob=1.0, cost=_linear(3, 1.0), a_blocks=eq(3, {2: -1.0, 3: 1.0}),
        b=np.array([-1.5]), g=np.zeros(0).reshape(0, 0), h=np.zeros(0),
        lb=np.zeros(1), ub=np.array([0.5]))])
    return model.Problem(horizon=3, dim=1, x0=np.zeros(1),
                         stages=[stage1, stage2, stage3],
                         lower_value_bound=np.array([0.0, 0.0]))


def demand_tree():
    """A scenario tree whose data and risk attitude depend on the node.

    The two middle-period branches carry different demands, probabilities,
    and tail levels, and the leaf demand rows reach back to the first
    decision — there is no stagewise-shared description of this process, so
    it exercises the per-node cut pools.
    """
    nodes = [model.Node(id=0, parent=None),
             model.Node(id=1, parent=0, prob=1.0,
                        payload=model.Realization(
                            prob=1.0, cost=_linear(1, 1.0), a_blocks=[],
                            b=np.zeros(0), g=np.zeros((0, 0)), h=np.zeros(0),
                            lb=np.zeros(1), ub=np.array([3.0])),
                        risk=RiskSpec(kind="cvar", epsilon=0.5))]
    mid = {2: (0.4, 0.6, 0.25), 3: (1.6, 0.4, 0.75)}  # id: demand, prob, eps
    for nid, (d, prob, eps) in mid.items():
        nodes.append(model.Node(
            id=nid, parent=1, prob=prob,
            payload=model.Realization(
                prob=prob, cost=_linear(2, 0.8), a_blocks=[], b=np.zeros(0),
                g=_demand_row(2, {1: 1.0, 2: 1.0}).reshape(1, -1),
                h=np.array([-d]), lb=np.zeros(1), ub=np.array([5.0])),
            risk=RiskSpec(kind="cvar", epsilon=eps)))
    leaves = {2: [(4, 0.9, 0.55), (5, 2.1, 0.45)],
              3: [(6, 0.3, 0.5), (7, 3.0, 0.5)]}
    for parent, kids in leaves.items():
        for nid, d, prob in kids:
            nodes.append(model.Node(
                id=nid, parent=parent, prob=prob,
                payload=model.Realization(
                    prob=prob, cost=_linear(3, 1.0), a_blocks=[],
                    b=np.zeros(0),
                    g=_demand_row(3, {1: 0.5, 2: 1.0, 3: 1.0}).reshape(1, -1),
                    h=np.array([-d]), lb=np.zeros(1), ub=np.array([8.0])),
            ))
    return model.Problem(horizon=3, dim=1, x0=np.zeros(1), form=model.TREE,
                         nodes=nodes, lower_value_bound=np.array([0.0, 0.0]))


BUILDERS = {
    "newsvendor.json": newsvendor,
    "inventory_mixture.json": inventory_mixture,
    "three_stage_chain.json": three_stage_chain,
    "demand_tree.json": demand_tree,
}


def main():
    OUT.mkdir(exist_ok=True)
    for name, build in BUILDERS.items():
        path = OUT / name
        io.save_problem(build(), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
