"""Random instance families for tests, benchmarks and scripts."""
from __future__ import annotations

import numpy as np

from .problem import TreeProblem, make_tree_problem

FAMILIES = ("path", "star", "binary", "random")


def tree_edges(family: str, size: int, rng: np.random.Generator | None = None) -> tuple[int, list[tuple[int, int]]]:
    """Vertex count and edge list of a tree.

    ``size`` is the vertex count for ``path`` and ``random``, the number of
    spokes for ``star`` (center is the last vertex) and the depth for
    ``binary``.
    """
    if family == "path":
        return size, [(i, i + 1) for i in range(size - 1)]
    if family == "star":
        return size + 1, [(i, size) for i in range(size)]
    if family == "binary":
        m = 2 ** (size + 1) - 1
        return m, [((v - 1) // 2, v) for v in range(1, m)]
    if family == "random":
        rng = rng or np.random.default_rng()
        if size == 2:
            return 2, [(0, 1)]
        # decode a random Pruefer sequence
        seq = list(rng.integers(0, size, size=size - 2))
        degree = [1] * size
        for v in seq:
            degree[v] += 1
        edges = []
        for v in seq:
            leaf = min(i for i in range(size) if degree[i] == 1)
            edges.append((leaf, int(v)))
            degree[leaf] -= 1
            degree[v] -= 1
        a, b = [i for i in range(size) if degree[i] == 1]
        edges.append((a, b))
        return size, edges
    raise ValueError(f"unknown tree family {family!r}")


def line_cost(n: int, scale: float = 1.0) -> np.ndarray:
    x = np.linspace(0.0, 1.0, n)
    return scale * np.abs(x[:, None] - x[None, :])


def random_marginal(n: int, rng: np.random.Generator, zeros: bool = False) -> np.ndarray:
    w = rng.dirichlet(np.ones(n))
    if zeros and n > 1:
        w[rng.random(n) < 0.3] = 0.0
        if w.sum() == 0:
            w[rng.integers(n)] = 1.0
    w = w / w.sum()
    # renormalize until the sum is 1 to machine precision
    w[-1] = 1.0 - w[:-1].sum() if w[-1] > 0 else w[-1]
    return w / w.sum()


def random_tree_problem(
    rng: np.random.Generator,
    family: str = "random",
    size: int = 4,
    n: int | tuple[int, int] = 3,
    cost: str = "uniform",
    cost_scale: float = 1.0,
    zeros: bool = False,
) -> TreeProblem:
    """Tree problem with gamma equal to the leaves.

    ``n`` is either a fixed support size or an inclusive ``(lo, hi)`` range
    drawn per vertex.  ``cost`` is ``uniform`` (iid in [0, scale]) or ``line``
    (distance of equispaced points, needs equal support sizes).
    """
    m, edges = tree_edges(family, size, rng)
    if isinstance(n, tuple):
        sizes = [int(rng.integers(n[0], n[1] + 1)) for _ in range(m)]
    else:
        sizes = [int(n)] * m
    deg = np.zeros(m, dtype=int)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    cost_edges = []
    for a, b in edges:
        if cost == "uniform":
            C = cost_scale * rng.random((sizes[a], sizes[b]))
        elif cost == "line":
            C = line_cost(sizes[a], cost_scale)
        else:
            raise ValueError(f"unknown cost model {cost!r}")
        cost_edges.append((a, b, C))
    marg = {v: random_marginal(sizes[v], rng, zeros) for v in range(m) if deg[v] == 1}
    return make_tree_problem(sizes, cost_edges, marg)


def random_dual_state(problem, rng: np.random.Generator, scale: float = 2.0) -> dict[int, np.ndarray]:
    return {k: scale * rng.standard_normal(problem.support_sizes[k]) for k in problem.gamma}
