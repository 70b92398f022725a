import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motgraph.generators import line_cost, random_tree_problem
from motgraph.oracle import lp_solve_small
from motgraph.pipeline import barycenter_estimate, certificate, schedule, solve_mot_eps
from motgraph.problem import build_barycenter_problem, make_tree_problem
from motgraph.rounding import check_tree_consistency, leaf_marginal
from motgraph.sinkhorn import UpdateRule
from strategies import tree_problems


def test_schedule():
    eta, ep = schedule(0.5, 3, 4, 2.0)
    assert eta == 0.5 / (6 * math.log(4))
    assert ep == 0.5 / 16
    # one-point supports: ln is floored at ln 2
    assert schedule(1.0, 2, 1, 1.0)[0] == 1.0 / (4 * math.log(2))
    assert schedule(1.0, 2, 3, 0.0)[1] == math.inf
    with pytest.raises(ValueError):
        schedule(0.0, 2, 2, 1.0)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25, 0.1])
def test_path_instance(path_problem, eps):
    res = solve_mot_eps(path_problem, eps)
    assert res.cost <= 0.2 + eps
    assert res.cost - 0.2 <= certificate(res) + 1e-12
    check_tree_consistency(res.plans, path_problem)
    assert res.transcript.final_error < res.eps_prime


@settings(max_examples=25)
@given(tree_problems(max_m=5, max_n=3, zeros=True), st.sampled_from([1.0, 0.5, 0.25]),
       st.sampled_from(["random", "cyclic", "greedy"]))
def test_eps_approximation_against_lp(case, eps, rule):
    p, _ = case
    res = solve_mot_eps(p, eps, rule=UpdateRule(rule, 1))
    _, opt = lp_solve_small(p)
    for k in p.gamma:
        assert np.abs(leaf_marginal(res.plans, p, k) - p.marginals[k]).sum() <= 1e-12
    assert opt - 1e-9 <= res.cost <= opt + eps
    assert res.cost - opt <= certificate(res) + 1e-9


def test_zero_cost_instance():
    p = make_tree_problem([2, 3, 2], [(0, 1, np.zeros((2, 3))), (1, 2, np.zeros((3, 2)))],
                          {0: [0.5, 0.5], 2: [0.1, 0.9]})
    res = solve_mot_eps(p, 1e-6)
    assert res.cost == 0.0
    assert res.tau == 1


def test_zero_leaf_cost_with_internal_cost():
    rng = np.random.default_rng(0)
    p = make_tree_problem([2, 3, 3, 2], [(0, 1, np.zeros((2, 3))), (1, 2, rng.random((3, 3))),
                                         (2, 3, np.zeros((3, 2)))], {0: [0.3, 0.7], 3: [0.6, 0.4]})
    res = solve_mot_eps(p, 0.1)
    assert res.tau == 1 and res.transcript.final_error < 1e-15
    _, opt = lp_solve_small(p)
    assert res.cost <= opt + 0.1
    assert res.cost - opt <= certificate(res) + 1e-12


def test_barycenter_identical_marginals():
    n = 5
    mu = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    p = build_barycenter_problem([mu, mu], line_cost(n, 4.0))
    eps = 0.2
    res = solve_mot_eps(p, eps)
    assert res.cost <= eps
    bary = barycenter_estimate(p, res)
    assert bary.sum() == pytest.approx(1.0)
    assert np.abs(bary - mu).sum() < 0.5


def test_barycenter_point_masses_vs_lp():
    n = 5
    C = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]).astype(float)
    a, b = np.eye(n)[0], np.eye(n)[4]
    p = build_barycenter_problem([a, b], C)
    _, opt = lp_solve_small(p)
    assert opt == pytest.approx(2.0)
    res = solve_mot_eps(p, 0.25)
    assert res.cost <= opt + 0.25


def test_single_marginal_barycenter():
    mu = [0.3, 0.7]
    p = build_barycenter_problem([mu], np.array([[0.0, 1.0], [1.0, 0.0]]))
    res = solve_mot_eps(p, 0.1)
    assert res.cost <= 0.1
    assert np.abs(barycenter_estimate(p, res) - mu).sum() < 0.2


def test_heterogeneous_supports():
    rng = np.random.default_rng(12)
    p = random_tree_problem(rng, family="random", size=5, n=(1, 4))
    _, opt = lp_solve_small(p)
    res = solve_mot_eps(p, 0.3)
    assert res.cost <= opt + 0.3
