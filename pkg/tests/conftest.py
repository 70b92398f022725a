import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from motgraph.problem import build_barycenter_problem, make_tree_problem

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=150, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def path_problem():
    """1-2-3 path, 0/1 costs, mu_1 = [.5, .5], mu_3 = [.3, .7]; OPT = 0.2."""
    return make_tree_problem([2, 2, 2], [(0, 1, FLIP), (1, 2, FLIP)], {0: [0.5, 0.5], 2: [0.3, 0.7]})


@pytest.fixture
def star_problem():
    rng = np.random.default_rng(7)
    n = 3
    x = np.arange(n, dtype=float)
    C = np.abs(x[:, None] - x[None, :])
    margs = [rng.dirichlet(np.ones(n)) for _ in range(3)]
    return build_barycenter_problem(margs, C)
