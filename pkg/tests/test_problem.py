import itertools

import numpy as np
import pytest
from hypothesis import given

from motgraph.errors import CyclicGraph, Disconnected, GammaNotLeaves, NotAProbability, ShapeMismatch
from motgraph.oracle import dense_cost
from motgraph.problem import (
    build_barycenter_problem,
    compute_constants,
    cost_of_plan,
    make_tree_problem,
    tree_max_cost,
)
from strategies import tree_problems

FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_path_constants(path_problem):
    c = compute_constants(path_problem)
    assert c.rc_per_leaf == {0: 1.0, 2: 1.0}
    assert c.rc_gamma == 1.0
    assert c.diameter == 2
    assert c.avg_leaf_distance == 2.0
    assert c.c_inf == 2.0


def test_cycle_rejected():
    with pytest.raises(CyclicGraph):
        make_tree_problem([2, 2, 2], [(0, 1, FLIP), (1, 2, FLIP), (2, 0, FLIP)], {0: [0.5, 0.5]})


def test_disconnected_rejected():
    with pytest.raises(Disconnected):
        make_tree_problem([2, 2, 2, 2], [(0, 1, FLIP), (2, 3, FLIP)], {k: [0.5, 0.5] for k in range(4)})


def test_gamma_must_be_leaves(path_problem):
    with pytest.raises(GammaNotLeaves, match="internal"):
        make_tree_problem([2, 2, 2], [(0, 1, FLIP), (1, 2, FLIP)], {0: [0.5, 0.5], 1: [0.5, 0.5], 2: [1, 0]})
    with pytest.raises(GammaNotLeaves, match="unconstrained"):
        make_tree_problem([2, 2, 2], [(0, 1, FLIP), (1, 2, FLIP)], {0: [0.5, 0.5]})


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        make_tree_problem([2, 3], [(0, 1, FLIP)], {0: [0.5, 0.5], 1: [1, 0, 0]})
    with pytest.raises(ShapeMismatch):
        make_tree_problem([2, 2], [(0, 1, FLIP)], {0: [0.5, 0.5], 1: [1, 0, 0]})


@pytest.mark.parametrize("w", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], [0.5, 0.5 + 1e-9]])
def test_marginal_must_be_probability(w):
    with pytest.raises(NotAProbability):
        make_tree_problem([2, 2], [(0, 1, FLIP)], {0: w, 1: [0.5, 0.5]})


def test_negative_cost_rejected():
    with pytest.raises(ValueError):
        make_tree_problem([2, 2], [(0, 1, -FLIP)], {0: [0.5, 0.5], 1: [0.5, 0.5]})


def test_cost_entries_read_only(path_problem):
    with pytest.raises(ValueError):
        path_problem.edges[0].entries[0, 0] = 5.0


@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_barycenter_constants(L):
    rng = np.random.default_rng(L)
    C = rng.random((4, 4)) * 3
    p = build_barycenter_problem([rng.dirichlet(np.ones(4)) for _ in range(L)], C)
    c = compute_constants(p)
    assert p.m == L + 1
    assert len(p.gamma) == L
    assert c.rc_gamma == np.max(C / L)
    assert c.rc_gamma * L == pytest.approx(C.max(), rel=1e-15)
    assert c.diameter == (2 if L > 1 else 1)


def test_barycenter_shape_errors():
    with pytest.raises(ShapeMismatch):
        build_barycenter_problem([[0.5, 0.5]], np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        build_barycenter_problem([[0.5, 0.5], [1.0, 0, 0]], np.zeros((2, 2)))


@given(tree_problems(max_m=5, max_n=3))
def test_tree_max_cost_matches_enumeration(case):
    p, _ = case
    assert tree_max_cost(p) == pytest.approx(dense_cost(p).max(), abs=1e-12)
    c = compute_constants(p)
    assert c.rc_gamma <= c.c_inf + 1e-12


def test_cost_of_product_plan(path_problem):
    plans = {(0, 1): np.full((2, 2), 0.25), (1, 2): np.full((2, 2), 0.25)}
    assert cost_of_plan(path_problem, plans) == pytest.approx(1.0)
    with pytest.raises(ShapeMismatch):
        cost_of_plan(path_problem, {(0, 1): np.ones((2, 2))})


def test_dense_cost_path_enumeration(path_problem):
    C = dense_cost(path_problem)
    for x in itertools.product(range(2), repeat=3):
        assert C[x] == (x[0] != x[1]) + (x[1] != x[2])
    assert sorted(C.ravel()) == [0, 0, 1, 1, 1, 1, 2, 2]
