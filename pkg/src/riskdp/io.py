"""Problem files, run artifacts, and stable numeric formatting.

Problem instances travel as JSON documents.  The top level carries
``horizon``, ``dim``, ``x0``, ``form`` (``"lattice"`` or ``"tree"``), the
certified recourse bounds ``lower_value_bound`` (one value per stage
``2..T``; the bound past the horizon is implicitly zero), an optional
default ``risk`` fragment, and either ``stages`` (lattice form) or
``nodes`` (tree form).  Each realization/node payload uses the keys
``prob``, ``cost_pieces`` (objects ``{"c": [...], "d": f}``), ``A`` (a list
of equality blocks, one per decision ``x_0..x_t``), ``b``, ``G`` (a single
matrix over the full history), ``h``, ``lb``, ``ub``.  ``A``/``b`` and
``G``/``h`` may be omitted when a payload has no such rows.  In tree form
the root row is a synthetic anchor: ``parent`` is ``null``, it carries no
payload, and its single child is the stage-1 node.

Run artifacts are CSV and JSON files written for byte-stable replay diffs:
all floats are printed with 17 significant digits, CSV uses ``.`` as the
decimal mark and ``,`` as the separator, and every CSV starts with a header
row.  The iteration log carries one row per iteration plus a terminal row
``k = K + 1`` holding the final fresh first-stage bound, so the summary's
``lower_bound`` always equals the last CSV row's value exactly.  The cut
dump holds one cut per line, ``kind,stage,iter,theta`` followed by the
``beta`` coefficients and — for optimality cuts only — the anchor
coefficients; the permanent zero cuts that close the recursion past the
horizon are scaffolding, not generated cuts, and are not dumped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cuts import CutPool
from .model import (LATTICE, TREE, ModelError, Node, Problem, PwlConvexCost,
                    Realization, Stage, validate_problem)
from .risk import RiskConfigError, RiskSpec

SIG_DIGITS = 17

CUT_KIND_OPTIMALITY = "optimality"
CUT_KIND_FEASIBILITY = "feasibility"

CUTS_CSV_HEADER = "kind,stage,iter,theta,beta...,anchor..."


class IoError(ValueError):
    """Malformed problem file or artifact."""


# ---------------------------------------------------------------------------
# numeric formatting
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """``x`` printed with 17 significant digits (bit-exact float64 round trip)."""
    s = format(float(x), f".{SIG_DIGITS}g")
    if not any(ch in s for ch in ".en"):  # integral finite value: keep float typing
        s += ".0"
    return s


def _dump_json(obj, indent: int = 0) -> str:
    """Serialize with every float printed via :func:`format_float`."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f'{pad}  {json.dumps(k)}: {_dump_json(v, indent + 1)}'
                for k, v in obj.items()]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump_json(v) for v in obj) + "]"
        rows = [f"{pad}  {_dump_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    return json.dumps(obj)


def dump_json(obj) -> str:
    return _dump_json(obj) + "\n"


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

def _parse_payload(raw: dict, t: int, n: int, where: str) -> Realization:
    try:
        pieces = raw["cost_pieces"]
        if not pieces:
            raise IoError(f"{where}: cost_pieces must be non-empty")
        pieces_c = np.asarray([pc["c"] for pc in pieces], dtype=float)
        pieces_d = np.asarray([pc["d"] for pc in pieces], dtype=float)
        cost = PwlConvexCost(pieces_c=pieces_c, pieces_d=pieces_d, dim=n)
        a_raw = raw.get("A") or []
        if a_raw:
            a_blocks = [np.asarray(blk, dtype=float).reshape(-1, n) for blk in a_raw]
            if len(a_blocks) != t + 1:
                raise IoError(f"{where}: A must list {t + 1} blocks (x_0..x_{t})")
        else:
            a_blocks = [np.zeros((0, n)) for _ in range(t + 1)]
        b = np.asarray(raw.get("b") or [], dtype=float)
        g_raw = raw.get("G") or []
        g = (np.asarray(g_raw, dtype=float).reshape(-1, (t + 1) * n)
             if g_raw else np.zeros((0, (t + 1) * n)))
        h = np.asarray(raw.get("h") or [], dtype=float)
        return Realization(prob=float(raw.get("prob", 1.0)), cost=cost,
                           a_blocks=a_blocks, b=b, g=g, h=h,
                           lb=np.asarray(raw["lb"], dtype=float),
                           ub=np.asarray(raw["ub"], dtype=float))
    except IoError:
        raise
    except (KeyError, TypeError, ValueError, ModelError) as exc:
        raise IoError(f"{where}: malformed payload: {exc}") from exc


def _risk_from(raw: dict, default: RiskSpec, where: str) -> RiskSpec:
    frag = raw.get("risk")
    if frag is None:
        return default
    try:
        return RiskSpec.from_json_fragment(frag)
    except RiskConfigError as exc:
        raise IoError(f"{where}: {exc}") from exc


def problem_from_dict(doc: dict) -> Problem:
    """Build a problem from its JSON document (see module docstring)."""
    try:
        horizon = int(doc["horizon"])
        n = int(doc["dim"])
        x0 = np.asarray(doc["x0"], dtype=float)
        form = doc.get("form", LATTICE)
        lvb = np.asarray(doc.get("lower_value_bound") or [], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise IoError(f"malformed problem document: {exc}") from exc
    default_risk = _risk_from(doc, RiskSpec(), "top-level risk")
    if form == LATTICE:
        if "stages" not in doc:
            raise IoError("lattice form requires a 'stages' list")
        stages = []
        for s, raw_stage in enumerate(doc["stages"], start=1):
            risk = _risk_from(raw_stage, default_risk, f"stage {s}")
            reals = [_parse_payload(raw, s, n, f"stage {s} realization {j}")
                     for j, raw in enumerate(raw_stage.get("realizations", []))]
            stages.append(Stage(realizations=reals, risk=risk))
        problem = Problem(horizon=horizon, dim=n, x0=x0, form=LATTICE,
                          stages=stages, lower_value_bound=lvb)
    elif form == TREE:
        if "nodes" not in doc:
            raise IoError("tree form requires a 'nodes' list")
        raw_nodes = doc["nodes"]
        depth_of: dict[int, int] = {}
        for raw in raw_nodes:  # depths for payload shapes; full checks come later
            nid = int(raw["id"])
            parent = raw.get("parent")
            if parent is None:
                depth_of[nid] = 0
            elif int(parent) in depth_of:
                depth_of[nid] = depth_of[int(parent)] + 1
            else:
                raise IoError(f"node {nid}: parent {parent} must appear earlier")
        nodes = []
        for raw in raw_nodes:
            nid = int(raw["id"])
            parent = raw.get("parent")
            d = depth_of[nid]
            payload = (None if parent is None
                       else _parse_payload(raw, d, n, f"node {nid}"))
            nodes.append(Node(id=nid, parent=None if parent is None else int(parent),
                              prob=float(raw.get("prob", 1.0)), payload=payload,
                              risk=_risk_from(raw, default_risk, f"node {nid}")))
        try:
            problem = Problem(horizon=horizon, dim=n, x0=x0, form=TREE,
                              nodes=nodes, lower_value_bound=lvb)
        except ModelError as exc:
            raise IoError(str(exc)) from exc
    else:
        raise IoError(f"unknown form {form!r}")
    violations = validate_problem(problem)
    if violations:
        raise IoError("invalid problem: " + "; ".join(violations))
    return problem


def load_problem(source) -> Problem:
    """Load and validate a problem from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        return problem_from_dict(source)
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {source}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IoError(f"{source} is not valid JSON: {exc}") from exc
    return problem_from_dict(doc)


def _payload_to_dict(r: Realization, include_prob: bool = True) -> dict:
    out: dict = {
        "cost_pieces": [{"c": list(map(float, c)), "d": float(d)}
                        for c, d in zip(r.cost.pieces_c, r.cost.pieces_d)],
    }
    if include_prob:
        out["prob"] = float(r.prob)
    if r.b.shape[0]:
        out["A"] = [blk.tolist() for blk in r.a_blocks]
        out["b"] = r.b.tolist()
    if r.h.shape[0]:
        out["G"] = r.g.tolist()
        out["h"] = r.h.tolist()
    out["lb"] = r.lb.tolist()
    out["ub"] = r.ub.tolist()
    return out


def problem_to_dict(p: Problem) -> dict:
    """The JSON document form of a problem (inverse of :func:`problem_from_dict`)."""
    doc: dict = {"horizon": p.horizon, "dim": p.dim, "x0": p.x0.tolist(),
                 "form": p.form, "lower_value_bound": p.lower_value_bound.tolist()}
    if p.form == LATTICE:
        stages = []
        for s, stage in enumerate(p.stages, start=1):
            raw: dict = {}
            if s >= 2:
                raw["risk"] = stage.risk.to_json_fragment()
            raw["realizations"] = [_payload_to_dict(r) for r in stage.realizations]
            stages.append(raw)
        doc["stages"] = stages
    else:
        rows = []
        for node in p.nodes:
            raw = {"id": node.id, "parent": node.parent, "prob": float(node.prob)}
            if node.parent is not None and p.depth(node.id) >= 1 and p.children(node.id):
                raw["risk"] = node.risk.to_json_fragment()
            if node.payload is not None:
                # node.prob is canonical for trees; keep the payload's copy out
                raw.update(_payload_to_dict(node.payload, include_prob=False))
            rows.append(raw)
        doc["nodes"] = rows
    return doc


def save_problem(p: Problem, path) -> None:
    Path(path).write_text(dump_json(problem_to_dict(p)))


# ---------------------------------------------------------------------------
# risk overrides
# ---------------------------------------------------------------------------

def parse_risk_override(text: str) -> RiskSpec:
    """Parse ``expectation``, ``cvar:EPS``, or ``mixture:LAMBDA,EPS``."""
    head, _, args = text.partition(":")
    try:
        if head == "expectation" and not args:
            return RiskSpec()
        if head == "cvar":
            spec = RiskSpec(kind="cvar", epsilon=float(args))
        elif head == "mixture":
            lam_s, _, eps_s = args.partition(",")
            spec = RiskSpec(kind="mixture", lam=float(lam_s), epsilon=float(eps_s))
        else:
            raise ValueError(f"unknown risk override {text!r} "
                             "(expected expectation, cvar:EPS, or mixture:LAMBDA,EPS)")
        spec.validate()
        return spec
    except (ValueError, RiskConfigError) as exc:
        raise ValueError(f"bad risk override {text!r}: {exc}") from exc


def apply_risk_override(p: Problem, spec: RiskSpec) -> Problem:
    """A copy of ``p`` with one risk spec on every risk-bearing stage/node."""
    if p.form == LATTICE:
        stages = [Stage(realizations=stage.realizations,
                        risk=spec if s >= 2 else stage.risk)
                  for s, stage in enumerate(p.stages, start=1)]
        return Problem(horizon=p.horizon, dim=p.dim, x0=p.x0, form=LATTICE,
                       stages=stages, lower_value_bound=p.lower_value_bound)
    nodes = [Node(id=m.id, parent=m.parent, prob=m.prob, payload=m.payload,
                  risk=spec if (m.parent is not None and p.children(m.id)) else m.risk)
             for m in p.nodes]
    return Problem(horizon=p.horizon, dim=p.dim, x0=p.x0, form=TREE,
                   nodes=nodes, lower_value_bound=p.lower_value_bound)


# ---------------------------------------------------------------------------
# run artifacts
# ---------------------------------------------------------------------------

def iterations_csv_text(result, dim: int) -> str:
    """The per-iteration log, terminal row included (see module docstring)."""
    header = (["k", "lower_bound"] + [f"x1_{i}" for i in range(dim)]
              + ["cuts_opt_added", "cuts_feas_added", "backtracks", "wall_ms"])
    lines = [",".join(header)]
    for r in result.reports:
        lines.append(",".join([str(r.k), format_float(r.lower_bound)]
                              + [format_float(v) for v in r.x1]
                              + [str(r.n_cuts_opt), str(r.n_cuts_feas),
                                 str(r.backtracks), format_float(r.wall_ms)]))
    if result.final_lower_bound is not None:
        k_final = (result.reports[-1].k + 1) if result.reports else 1
        lines.append(",".join([str(k_final), format_float(result.final_lower_bound)]
                              + [format_float(v) for v in result.final_x1]
                              + ["0", "0", "0", format_float(0.0)]))
    return "\n".join(lines) + "\n"


def write_iterations_csv(path, result, dim: int) -> None:
    Path(path).write_text(iterations_csv_text(result, dim))


def _dump_pool_keys(pools) -> tuple[list[int], list[int]]:
    """Opt/feas pool keys to dump, ascending, permanent zero pools excluded."""
    p = pools.problem
    if p.form == LATTICE:
        skip = {p.horizon + 1}
    else:
        skip = {m.id for m in p.nodes
                if m.parent is not None and p.depth(m.id) == p.horizon}
    return ([k for k in sorted(pools.opt) if k not in skip],
            sorted(pools.feas))


def cuts_csv_text(pools) -> str:
    """One generated cut per line: optimality pools first, then feasibility."""
    lines = [CUTS_CSV_HEADER]
    opt_keys, feas_keys = _dump_pool_keys(pools)
    for key in opt_keys:
        for cut in pools.opt[key].optimality:
            lines.append(",".join([CUT_KIND_OPTIMALITY, str(key), str(cut.iteration),
                                   format_float(cut.theta)]
                                  + [format_float(v) for v in cut.beta]
                                  + [format_float(v) for v in cut.anchor]))
    for key in feas_keys:
        for fcut in pools.feas[key].feasibility:
            lines.append(",".join([CUT_KIND_FEASIBILITY, str(key), str(fcut.iteration),
                                   format_float(fcut.theta_tilde)]
                                  + [format_float(v) for v in fcut.beta_tilde]))
    return "\n".join(lines) + "\n"


def write_cuts_csv(path, pools) -> None:
    Path(path).write_text(cuts_csv_text(pools))


@dataclass
class CutRecord:
    """One parsed cut-dump row; ``anchor`` is ``None`` for feasibility cuts."""

    kind: str
    where: int
    iteration: int
    theta: float
    beta: np.ndarray
    anchor: np.ndarray | None


def read_cuts_csv(path) -> list[CutRecord]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != CUTS_CSV_HEADER:
        raise IoError(f"{path}: missing cut dump header")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        try:
            kind, where, iteration, theta = (fields[0], int(fields[1]),
                                             int(fields[2]), float(fields[3]))
            coeffs = np.asarray([float(v) for v in fields[4:]])
            if kind == CUT_KIND_OPTIMALITY:
                if coeffs.shape[0] % 2:
                    raise ValueError("optimality row needs matching beta and anchor")
                d = coeffs.shape[0] // 2
                rec = CutRecord(kind, where, iteration, theta, coeffs[:d], coeffs[d:])
            elif kind == CUT_KIND_FEASIBILITY:
                rec = CutRecord(kind, where, iteration, theta, coeffs, None)
            else:
                raise ValueError(f"unknown cut kind {kind!r}")
        except (IndexError, ValueError) as exc:
            raise IoError(f"{path}:{ln}: malformed cut row: {exc}") from exc
        out.append(rec)
    return out


def summary_dict(result, seed: int) -> dict:
    """The run summary; ``lower_bound`` mirrors the last iteration-log row."""
    if result.final_lower_bound is not None:
        bound = result.final_lower_bound
    elif result.reports:
        bound = result.reports[-1].lower_bound
    else:
        bound = None
    x1 = result.final_x1
    return {"status": result.status,
            "lower_bound": None if bound is None else float(bound),
            "x1": None if x1 is None else [float(v) for v in x1],
            "iters": result.iters,
            "seed": seed}


def write_summary_json(path, result, seed: int) -> None:
    Path(path).write_text(dump_json(summary_dict(result, seed)))
