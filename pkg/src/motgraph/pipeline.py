"""End-to-end epsilon-approximation: parameters, Sinkhorn, plan extraction, rounding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bp import TreeBP
from .problem import TreeProblem, compute_constants, cost_of_plan
from .rounding import RoundingReport, round_tree
from .sinkhorn import SolverConfig, Transcript, UpdateRule, default_max_iters, run


@dataclass
class ApproxResult:
    plans: dict
    cost: float
    eta: float
    eps_prime: float
    transcript: Transcript
    report: RoundingReport
    rc_per_leaf: dict[int, float]
    m: int
    n_max: int

    @property
    def tau(self) -> int:
        return self.transcript.tau


def schedule(eps: float, m: int, n_max: int, rc_gamma: float) -> tuple[float, float]:
    """``eta = eps / (2 m ln n)`` and ``eps' = eps / (8 R)``.

    ``ln`` is floored at ``ln 2`` so a one-point support keeps eta finite, and
    a zero leaf cost gives ``eps' = inf``: the stopping test then passes after
    the first step, and any rounded plan already meets the certificate.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    eta = eps / (2.0 * m * math.log(max(n_max, 2)))
    eps_prime = eps / (8.0 * rc_gamma) if rc_gamma > 0 else math.inf
    return eta, eps_prime


def certificate_value(m, n_max, eta, rc_per_leaf, per_leaf_l1) -> float:
    """A-posteriori bound on ``cost - OPT``: ``m eta ln n + 4 sum_k R_k l1_k``."""
    return m * eta * math.log(n_max) + 4.0 * sum(rc_per_leaf[k] * per_leaf_l1[k] for k in per_leaf_l1)


def certificate(result: ApproxResult, problem=None) -> float:
    return certificate_value(result.m, result.n_max, result.eta, result.rc_per_leaf,
                             result.report.per_leaf_l1)


def solve_mot_eps(
    problem: TreeProblem,
    eps: float,
    rule: UpdateRule | None = None,
    max_iters: int | None = None,
    error_refresh_period: int | None = None,
) -> ApproxResult:
    rule = rule or UpdateRule()
    consts = compute_constants(problem)
    eta, eps_prime = schedule(eps, problem.m, problem.n_max, consts.rc_gamma)
    if max_iters is None:
        max_iters = default_max_iters(len(problem.gamma), consts.rc_gamma, eta, eps_prime)
    cfg = SolverConfig(eps_prime=eps_prime, max_iters=max_iters,
                       error_refresh_period=error_refresh_period)
    engine = TreeBP(problem, eta)
    engine, transcript = run(engine, rule, cfg)
    plans = engine.edge_plans()
    rounded, report = round_tree(plans, problem)
    return ApproxResult(
        plans=rounded,
        cost=cost_of_plan(problem, rounded),
        eta=eta,
        eps_prime=eps_prime,
        transcript=transcript,
        report=report,
        rc_per_leaf=consts.rc_per_leaf,
        m=problem.m,
        n_max=problem.n_max,
    )


def barycenter_estimate(problem: TreeProblem, result: ApproxResult) -> np.ndarray:
    """Normalized marginal of the star center under the rounded plans."""
    center = problem.m - 1
    k = problem.gamma[0]
    e = problem.edge_between(k, center)
    B = result.plans[e.key]
    w = B.sum(axis=0) if e.head == center else B.sum(axis=1)
    return w / w.sum()
