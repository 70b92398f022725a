"""Hypothesis strategies shared by the test modules."""
import numpy as np
from hypothesis import strategies as st

from motgraph.generators import random_tree_problem


@st.composite
def tree_problems(draw, max_m=5, max_n=4, zeros=False):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    family = draw(st.sampled_from(["path", "star", "random"]))
    if family == "star":
        size = draw(st.integers(1, max_m - 1))
    else:
        size = draw(st.integers(2, max_m))
    p = random_tree_problem(rng, family=family, size=size, n=(1, max_n), zeros=zeros)
    return p, rng
