import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from motgraph.bp import TreeBP, generalized_kl, logsumexp
from motgraph.errors import NeverUpdated, StaleDependency
from motgraph.generators import random_dual_state
from motgraph.oracle import dense_dual_objective, dense_pairwise, dense_plan, dense_projection
from strategies import tree_problems


def rel_err(a, b):
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def loaded_engine(p, rng, eta=None, scale=2.0):
    eta = eta if eta is not None else float(rng.uniform(0.1, 1.0))
    eng = TreeBP(p, eta)
    for k, v in random_dual_state(p, rng, scale).items():
        eng.set_log_u(k, v)
    eng.refresh_all()
    return eng


def test_logsumexp_handles_neg_inf():
    a = np.array([[-np.inf, -np.inf], [0.0, np.log(3.0)]])
    out = logsumexp(a, axis=1)
    assert out[0] == -np.inf
    assert out[1] == pytest.approx(np.log(4.0))
    assert logsumexp(np.array([1000.0, 1000.0])) == pytest.approx(1000 + np.log(2))


def test_generalized_kl():
    mu = np.array([0.2, 0.8])
    assert generalized_kl(mu, mu) == 0.0
    p = np.array([0.5, 0.5])
    assert generalized_kl(mu, p) == pytest.approx(0.2 * np.log(0.4) + 0.8 * np.log(1.6))
    # zero entries of mu contribute only through the mass term
    assert generalized_kl(np.array([0.0, 1.0]), np.array([0.3, 1.0])) == pytest.approx(0.3)


@given(tree_problems(max_m=5, max_n=4, zeros=True))
def test_projections_match_dense(case):
    p, rng = case
    eng = loaded_engine(p, rng)
    B = dense_plan(p, eng.eta, eng.log_u)
    for v in range(p.m):
        want = dense_projection(B, v)
        got = eng.leaf_projection(v) if v in p.gamma else eng.internal_projection(v)
        assert rel_err(got, want) < 1e-9
    for e in p.edges:
        assert rel_err(eng.pairwise_projection(e.tail, e.head), dense_pairwise(B, e.tail, e.head)) < 1e-9
    assert eng.total_mass() == pytest.approx(B.sum(), rel=1e-9)
    assert eng.dual_objective() == pytest.approx(dense_dual_objective(p, eng.eta, eng.log_u), rel=1e-9, abs=1e-12)


@given(tree_problems(max_m=5, max_n=4))
def test_mass_is_the_same_at_every_node(case):
    p, rng = case
    eng = loaded_engine(p, rng)
    masses = [eng.log_total_mass(v) for v in range(p.m)]
    assert np.ptp(masses) < 1e-10


@given(tree_problems(max_m=5, max_n=3), st.integers(0, 3))
def test_gradient_matches_finite_differences(case, pick):
    p, rng = case
    eng = loaded_engine(p, rng, scale=0.5)
    k = p.gamma[pick % len(p.gamma)]
    eta = eng.eta
    grad = eng.dual_gradient(k)
    h = 1e-5
    base = eng.log_u[k].copy()
    fd = np.zeros_like(base)
    for i in range(base.size):
        vals = []
        for s in (1, -1):
            lam = eta * base
            lam[i] += s * h
            eng.set_log_u(k, lam / eta)
            eng.refresh_all()
            vals.append(eng.dual_objective())
        fd[i] = (vals[0] - vals[1]) / (2 * h)
    eng.set_log_u(k, base)
    assert np.abs(fd - grad).max() <= 1e-4 * max(np.abs(grad).max(), 1e-3)


def test_stale_message_raises(path_problem):
    eng = TreeBP(path_problem, 0.5)
    with pytest.raises(StaleDependency):
        eng.leaf_projection(0)
    eng.refresh_all()
    eng.set_log_u(0, np.array([0.3, -0.1]))
    # messages leaving vertex 0 are now stale, so the projection at 2 is too
    assert not eng.is_clean(0, 1) and not eng.is_clean(1, 2)
    assert eng.is_clean(2, 1) and eng.is_clean(1, 0)
    with pytest.raises(StaleDependency):
        eng.leaf_projection(2)
    with pytest.raises(StaleDependency):
        eng.update_message(1, 2)
    assert eng.refresh_path(0, 2) == 2
    eng.leaf_projection(2)


def test_refresh_all_only_touches_dirty(path_problem):
    eng = TreeBP(path_problem, 0.5)
    assert eng.refresh_all() == 4
    assert eng.refresh_all() == 0
    eng.set_log_u(2, np.zeros(2))
    assert eng.refresh_all() == 2


def test_step_makes_leaf_exact(path_problem):
    eng = TreeBP(path_problem, 0.3)
    eng.refresh_all()
    with pytest.raises(NeverUpdated):
        eng.lambda_range(0)
    eng.sinkhorn_step(0)
    np.testing.assert_allclose(eng.leaf_projection(0), path_problem.marginals[0], atol=1e-15)
    assert eng.lambda_range(0) <= 1.0 + 1e-12


def test_state_roundtrip(path_problem):
    rng = np.random.default_rng(3)
    eng = loaded_engine(path_problem, rng)
    saved = eng.copy_state()
    before = eng.dual_objective()
    eng.set_log_u(0, np.zeros(2))
    eng.load_state(saved)
    eng.refresh_all()
    assert eng.dual_objective() == before


def test_zero_weight_support_points():
    from motgraph.problem import make_tree_problem

    C = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    p = make_tree_problem([3, 3], [(0, 1, C)], {0: [0.0, 0.5, 0.5], 1: [1.0, 0.0, 0.0]})
    eng = TreeBP(p, 0.2)
    eng.refresh_all()
    B = eng.pairwise_projection(0, 1)
    assert np.all(B[0] == 0) and np.all(B[:, 1:] == 0)
