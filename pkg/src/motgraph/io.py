"""JSON problem files and result files.

Files use 1-indexed vertex ids; everything in memory is 0-indexed.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, ValidationError
from .junction import GeneralGraphProblem, make_general_problem
from .problem import GraphProblem, TreeProblem, make_tree_problem


class ProblemFileError(ValidationError):
    """The document is not a well-formed problem file."""


def _require(doc, key):
    if key not in doc:
        raise ProblemFileError(f"problem file is missing key {key!r}")
    return doc[key]


def _vertex(v, m, what):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProblemFileError(f"{what} must be an integer vertex id, got {v!r}")
    if not 1 <= v <= m:
        raise ShapeMismatch(f"{what} {v} is outside 1..{m}")
    return v - 1


def problem_from_dict(doc: dict) -> GraphProblem:
    """Parse and validate.  ``graph_type`` defaults to ``"tree"``."""
    if not isinstance(doc, dict):
        raise ProblemFileError("problem file must contain a JSON object")
    m = _require(doc, "m")
    supports = [int(n) for n in _require(doc, "supports")]
    if len(supports) != m:
        raise ShapeMismatch(f"'supports' has {len(supports)} entries but m = {m}")
    edges = []
    for i, e in enumerate(_require(doc, "edges")):
        u = _vertex(_require(e, "u"), m, f"edge {i + 1} endpoint u")
        v = _vertex(_require(e, "v"), m, f"edge {i + 1} endpoint v")
        c = np.asarray(_require(e, "cost"), dtype=float)
        want = (supports[u], supports[v])
        if c.size != want[0] * want[1]:
            raise ShapeMismatch(
                f"cost of edge ({u + 1}, {v + 1}) has {c.size} entries, expected {want[0]}x{want[1]}"
            )
        edges.append((u, v, c.reshape(want)))
    marginals = {}
    for g in _require(doc, "gamma"):
        k = _vertex(_require(g, "vertex"), m, "gamma vertex")
        if k in marginals:
            raise ProblemFileError(f"vertex {k + 1} listed twice in gamma")
        marginals[k] = _require(g, "marginal")
    kind = doc.get("graph_type", "tree")
    if kind == "tree":
        return make_tree_problem(supports, edges, marginals)
    if kind == "general":
        return make_general_problem(supports, edges, marginals)
    raise ProblemFileError(f"graph_type must be 'tree' or 'general', got {kind!r}")


def problem_to_dict(p: GraphProblem) -> dict:
    doc = {
        "m": p.m,
        "supports": list(p.support_sizes),
        "edges": [
            {"u": e.tail + 1, "v": e.head + 1, "cost": e.entries.ravel().tolist()} for e in p.edges
        ],
        "gamma": [{"vertex": k + 1, "marginal": np.asarray(p.marginals[k]).tolist()} for k in p.gamma],
    }
    doc["graph_type"] = "general" if isinstance(p, GeneralGraphProblem) else "tree"
    return doc


def read_problem(path) -> GraphProblem:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: invalid JSON ({exc})") from exc
    return problem_from_dict(doc)


def write_problem(p: GraphProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(p), indent=1) + "\n", encoding="utf-8")


def _num(x: float):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def result_to_dict(problem: GraphProblem, result, certificate: float | None = None, **extra) -> dict:
    """Serializable summary of an :class:`ApproxResult`.

    Tree results list one plan per edge (``rows`` is vertex ``u``); junction
    results list one tensor per cluster with its vertex ids.
    """
    plans = []
    for key, B in result.plans.items():
        ids = [int(v) + 1 for v in key]
        entry = {"vertices": ids, "shape": list(B.shape), "plan": B.ravel().tolist()}
        if isinstance(problem, TreeProblem):
            entry = {"u": ids[0], "v": ids[1], **entry}
        plans.append(entry)
    doc = {
        "cost": _num(result.cost),
        "certificate": _num(certificate) if certificate is not None else None,
        "eta": _num(result.eta),
        "eps_prime": _num(result.eps_prime),
        "tau": result.tau,
        "rounding_l1": {str(k + 1): v for k, v in result.report.per_leaf_l1.items()},
        "rc_gamma": _num(max(result.rc_per_leaf.values())),
        "plans": plans,
    }
    doc.update(extra)
    return doc


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
