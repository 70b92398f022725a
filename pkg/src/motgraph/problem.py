"""Graph-structured MOT problem instances.

Vertices are 0-indexed here; the JSON problem files use 1-indexed ids and the
conversion happens in :mod:`motgraph.io`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CyclicGraph,
    Disconnected,
    GammaNotLeaves,
    NotAProbability,
    ShapeMismatch,
)

PROB_TOL = 1e-12

# (tail, head) -> plan matrix of shape (n_tail, n_head)
EdgePlanSet = dict


@dataclass(frozen=True)
class CostMatrix:
    tail: int
    head: int
    entries: np.ndarray

    @property
    def shape(self):
        return self.entries.shape

    @property
    def key(self) -> tuple[int, int]:
        return (self.tail, self.head)


def as_marginal(weights, n: int | None = None, name: str = "marginal") -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise NotAProbability(f"{name} must be a vector, got shape {w.shape}")
    if n is not None and w.shape[0] != n:
        raise ShapeMismatch(f"{name} has length {w.shape[0]}, expected {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise NotAProbability(f"{name} has negative or non-finite entries")
    if abs(w.sum() - 1.0) > PROB_TOL:
        raise NotAProbability(f"{name} sums to {w.sum()!r}, not 1")
    return w


def as_cost(entries, tail: int, head: int) -> CostMatrix:
    c = np.asarray(entries, dtype=float)
    if c.ndim != 2:
        raise ShapeMismatch(f"cost on edge ({tail}, {head}) must be a matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError(f"cost on edge ({tail}, {head}) has non-finite entries")
    if np.any(c < 0):
        raise ValueError(f"cost on edge ({tail}, {head}) has negative entries")
    c = c.copy()
    c.setflags(write=False)
    return CostMatrix(tail, head, c)


@dataclass(frozen=True)
class GraphProblem:
    """Common fields of tree and general graph problems."""

    m: int
    support_sizes: tuple[int, ...]
    edges: tuple[CostMatrix, ...]
    gamma: tuple[int, ...]
    marginals: Mapping[int, np.ndarray] = field(repr=False)

    @cached_property
    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.m)]
        for e in self.edges:
            nbrs[e.tail].append(e.head)
            nbrs[e.head].append(e.tail)
        return [sorted(x) for x in nbrs]

    @property
    def degrees(self) -> list[int]:
        return [len(x) for x in self.neighbors]

    @property
    def n_max(self) -> int:
        return max(self.support_sizes)

    @cached_property
    def _edge_lookup(self) -> dict[tuple[int, int], int]:
        out = {}
        for i, e in enumerate(self.edges):
            out[(e.tail, e.head)] = i
            out[(e.head, e.tail)] = i
        return out

    def edge_between(self, a: int, b: int) -> CostMatrix:
        return self.edges[self._edge_lookup[(a, b)]]

    def oriented_cost(self, rows: int, cols: int) -> np.ndarray:
        """Cost matrix of edge {rows, cols} with ``rows`` indexing the first axis."""
        e = self.edge_between(rows, cols)
        return e.entries if e.tail == rows else e.entries.T

    def _check_common(self):
        if self.m < 2:
            raise ShapeMismatch("need at least two vertices")
        if len(self.support_sizes) != self.m:
            raise ShapeMismatch("support_sizes must have one entry per vertex")
        if any(int(n) < 1 for n in self.support_sizes):
            raise ShapeMismatch("support sizes must be positive")
        for e in self.edges:
            for v in (e.tail, e.head):
                if not 0 <= v < self.m:
                    raise ShapeMismatch(f"edge ({e.tail}, {e.head}) references unknown vertex {v}")
            want = (self.support_sizes[e.tail], self.support_sizes[e.head])
            if e.entries.shape != want:
                raise ShapeMismatch(
                    f"cost on edge ({e.tail}, {e.head}) has shape {e.entries.shape}, expected {want}"
                )
        if set(self.marginals) != set(self.gamma):
            raise ShapeMismatch("marginals must be given exactly for the vertices in gamma")
        for k in self.gamma:
            if not 0 <= k < self.m:
                raise ShapeMismatch(f"gamma vertex {k} out of range")
            as_marginal(self.marginals[k], self.support_sizes[k], name=f"marginal of vertex {k}")


@dataclass(frozen=True)
class TreeProblem(GraphProblem):
    # Only the degenerate one-marginal barycenter sets this; see build_barycenter_problem.
    strict_leaves: bool = True

    @cached_property
    def leaf_neighbor(self) -> dict[int, int]:
        return {k: self.neighbors[k][0] for k in self.gamma}

    def leaf_edge(self, k: int) -> CostMatrix:
        return self.edge_between(k, self.leaf_neighbor[k])


def _union_find_check(m: int, pairs: Sequence[tuple[int, int]]):
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise CyclicGraph(f"edge ({a}, {b}) closes a cycle; the edge set is not a tree")
        parent[ra] = rb
    roots = {find(v) for v in range(m)}
    if len(roots) > 1:
        raise Disconnected(f"graph has {len(roots)} connected components")


def validate_tree_problem(p: TreeProblem) -> TreeProblem:
    """Return ``p`` unchanged if every tree invariant holds, otherwise raise."""
    p._check_common()
    _union_find_check(p.m, [e.key for e in p.edges])
    leaves = {v for v, d in enumerate(p.degrees) if d == 1}
    if p.strict_leaves and set(p.gamma) != leaves:
        internal = sorted(set(p.gamma) - leaves)
        missing = sorted(leaves - set(p.gamma))
        raise GammaNotLeaves(
            f"gamma must equal the leaf set; internal vertices in gamma: {internal}, "
            f"unconstrained leaves: {missing}"
        )
    if not set(p.gamma) <= leaves:
        raise GammaNotLeaves(f"gamma vertices {sorted(set(p.gamma) - leaves)} are not leaves")
    return p


def make_tree_problem(
    support_sizes: Sequence[int],
    edges: Sequence[tuple[int, int, object]],
    marginals: Mapping[int, object],
) -> TreeProblem:
    """Build and validate a tree problem from plain Python data.

    ``edges`` holds ``(tail, head, cost)`` triples; ``marginals`` maps each
    constrained vertex to its weights.
    """
    costs = tuple(as_cost(c, int(a), int(b)) for a, b, c in edges)
    margs = {int(k): as_marginal(w, name=f"marginal of vertex {k}") for k, w in marginals.items()}
    p = TreeProblem(
        m=len(support_sizes),
        support_sizes=tuple(int(n) for n in support_sizes),
        edges=costs,
        gamma=tuple(sorted(margs)),
        marginals=margs,
    )
    return validate_tree_problem(p)


def build_barycenter_problem(marginals: Sequence[object], ground_cost) -> TreeProblem:
    """Star-shaped problem whose center is the (free) barycenter vertex.

    Spokes carry ``ground_cost / L`` oriented (leaf, center).  With a single
    marginal this degenerates to a two-vertex path whose second endpoint is a
    free leaf.
    """
    C = np.asarray(ground_cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch(f"ground cost must be square, got shape {C.shape}")
    n = C.shape[0]
    L = len(marginals)
    if L < 1:
        raise ShapeMismatch("need at least one marginal")
    margs = {}
    for i, w in enumerate(marginals):
        margs[i] = as_marginal(w, n, name=f"marginal {i + 1}")
    center = L
    edges = tuple(as_cost(C / L, i, center) for i in range(L))
    p = TreeProblem(
        m=L + 1,
        support_sizes=(n,) * (L + 1),
        edges=edges,
        gamma=tuple(range(L)),
        marginals=margs,
        strict_leaves=L > 1,
    )
    return validate_tree_problem(p)


@dataclass(frozen=True)
class ProblemConstants:
    rc_per_leaf: dict[int, float]
    rc_gamma: float
    diameter: int
    avg_leaf_distance: float
    c_inf: float


def hop_distances(neighbors: Sequence[Sequence[int]], source: int) -> list[int]:
    dist = [-1] * len(neighbors)
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in neighbors[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def tree_max_cost(p: GraphProblem) -> float:
    """Max over joint configurations of the summed edge costs (max-plus DP on a tree)."""
    nbrs = p.neighbors
    order, parent = [0], [-1] * p.m
    seen = [False] * p.m
    seen[0] = True
    for v in order:
        for w in nbrs[v]:
            if not seen[w]:
                seen[w] = True
                parent[w] = v
                order.append(w)
    best = [np.zeros(p.support_sizes[v]) for v in range(p.m)]
    for v in reversed(order[1:]):
        u = parent[v]
        best[u] = best[u] + np.max(p.oriented_cost(u, v) + best[v][None, :], axis=1)
    return float(np.max(best[0]))


def compute_constants(p: TreeProblem) -> ProblemConstants:
    rc = {k: float(np.max(p.leaf_edge(k).entries)) for k in p.gamma}
    dists = {k: hop_distances(p.neighbors, k) for k in p.gamma}
    # tree diameter: farthest vertex from a farthest vertex
    far = int(np.argmax(hop_distances(p.neighbors, 0)))
    diameter = max(hop_distances(p.neighbors, far))
    pairs = [dists[a][b] for i, a in enumerate(p.gamma) for b in p.gamma[i + 1:]]
    return ProblemConstants(
        rc_per_leaf=rc,
        rc_gamma=max(rc.values()),
        diameter=int(diameter),
        avg_leaf_distance=float(np.mean(pairs)) if pairs else 0.0,
        c_inf=tree_max_cost(p),
    )


def cost_of_plan(p: GraphProblem, plans: Mapping[tuple[int, int], np.ndarray]) -> float:
    total = 0.0
    for e in p.edges:
        if e.key not in plans:
            raise ShapeMismatch(f"no plan for edge {e.key}")
        B = np.asarray(plans[e.key])
        if B.shape != e.entries.shape:
            raise ShapeMismatch(f"plan on edge {e.key} has shape {B.shape}, expected {e.entries.shape}")
        total += float(np.sum(e.entries * B))
    return total


def is_balanced(p: TreeProblem, c: float) -> bool:
    """Diagnostic: ``|Gamma| * R_C^Gamma <= c * ||C||_inf``."""
    k = compute_constants(p)
    return len(p.gamma) * k.rc_gamma <= c * k.c_inf
