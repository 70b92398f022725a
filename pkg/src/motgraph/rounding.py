"""Rounding of approximate plans onto the feasible set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Inconsistent
from .problem import TreeProblem, cost_of_plan

NEG_TOL = 1e-12
MASS_TOL = 1e-9


@dataclass
class RoundingReport:
    per_leaf_l1: dict[int, float]
    cost_before: float
    cost_after: float

    def bound(self, rc_per_leaf: dict[int, float]) -> float:
        """Cost-perturbation bound ``2 sum_k ||C^(k,l_k)||_inf ||mu_k - P_k||_1``."""
        return 2.0 * sum(rc_per_leaf[k] * v for k, v in self.per_leaf_l1.items())


def round_bimarginal(B, r, c) -> np.ndarray:
    """Round a nonnegative matrix to one with row sums ``r`` and column sums ``c``.

    Rows are scaled down to at most ``r``, then columns down to at most ``c``;
    the leftover mass is added back as a rank-one correction.  The result is
    within ``2 (||r - rowsums(B)||_1 + ||c - colsums(B)||_1)`` of ``B`` in l1.
    A zero-mass ``B`` comes back as ``r c^T``.
    """
    B = np.array(B, dtype=float)
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    rows = B.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(rows > 0, np.minimum(1.0, r / rows), 1.0)
    F = B * x[:, None]
    cols = F.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(cols > 0, np.minimum(1.0, c / cols), 1.0)
    F = F * y[None, :]
    err_r = r - F.sum(axis=1)
    err_c = c - F.sum(axis=0)
    assert err_r.min() >= -NEG_TOL and err_c.min() >= -NEG_TOL, "scaling overshot a target"
    err_r = np.maximum(err_r, 0.0)
    err_c = np.maximum(err_c, 0.0)
    mass = err_r.sum()
    if mass > 0:
        F = F + np.outer(err_r, err_c) / mass
    return F


def check_tree_consistency(plans, problem, tol: float = 1e-9) -> float:
    """Largest disagreement between two edges' marginals at a shared vertex."""
    worst = 0.0
    for v in range(problem.m):
        margs = []
        for w in problem.neighbors[v]:
            e = problem.edge_between(v, w)
            B = plans[e.key]
            margs.append(B.sum(axis=1) if e.tail == v else B.sum(axis=0))
        for other in margs[1:]:
            worst = max(worst, float(np.abs(other - margs[0]).sum()))
    if worst > tol:
        raise Inconsistent(f"edge plans disagree by {worst:.3g} at a shared vertex")
    return worst


def leaf_marginal(plans, problem: TreeProblem, k: int) -> np.ndarray:
    e = problem.leaf_edge(k)
    B = plans[e.key]
    return B.sum(axis=1) if e.tail == k else B.sum(axis=0)


def round_tree(plans, problem: TreeProblem):
    """Make every leaf marginal exact while keeping internal-side marginals.

    Leaves are processed in ascending order; each leaf edge plan is rounded
    with the leaf side targeting ``mu_k`` and the other side targeting its
    own current marginal.  The plans must carry unit mass (true after any
    Sinkhorn update), otherwise the two targets cannot both be met.
    """
    check_tree_consistency(plans, problem, tol=1e-6)
    mass = float(np.sum(plans[problem.edges[0].key]))
    if abs(mass - 1.0) > MASS_TOL:
        raise Inconsistent(f"plans carry total mass {mass!r}; rounding needs unit mass")
    out = {key: np.array(B, dtype=float) for key, B in plans.items()}
    per_leaf = {}
    for k in problem.gamma:
        e = problem.leaf_edge(k)
        B = out[e.key] if e.tail == k else out[e.key].T
        per_leaf[k] = float(np.abs(problem.marginals[k] - B.sum(axis=1)).sum())
        R = round_bimarginal(B, problem.marginals[k], B.sum(axis=0))
        out[e.key] = R if e.tail == k else np.ascontiguousarray(R.T)
    report = RoundingReport(per_leaf, cost_of_plan(problem, plans), cost_of_plan(problem, out))
    return out, report
