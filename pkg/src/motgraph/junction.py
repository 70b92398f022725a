"""MOT on graphs with cycles via a junction tree (cluster tree) decomposition.

Clusters hold the summed costs of the graph edges assigned to them; messages
between clusters are log tensors over the separator variables.  Every
constrained vertex ``k`` gets a singleton leaf cluster ``(k,)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bp import MessagePassingTree, logsumexp
from .errors import (
    CostNotCovered,
    Disconnected,
    FamilyPreservationViolated,
    Inconsistent,
    GammaNotIsolated,
    LeafNotSingleton,
    RunningIntersectionViolated,
    ShapeMismatch,
)
from .pipeline import ApproxResult, schedule
from .problem import GraphProblem, TreeProblem, _union_find_check, as_cost, as_marginal, hop_distances
from .rounding import MASS_TOL, RoundingReport, round_bimarginal
from .sinkhorn import SolverConfig, UpdateRule, default_max_iters, run


@dataclass(frozen=True)
class GeneralGraphProblem(GraphProblem):
    pass


def validate_general_problem(g: GeneralGraphProblem) -> GeneralGraphProblem:
    g._check_common()
    for e in g.edges:
        if e.tail == e.head:
            raise ShapeMismatch(f"self-loop on vertex {e.tail}")
    dist = hop_distances(g.neighbors, 0)
    if min(dist) < 0:
        raise Disconnected("graph is not connected")
    return g


def make_general_problem(support_sizes, edges, marginals) -> GeneralGraphProblem:
    costs = tuple(as_cost(c, int(a), int(b)) for a, b, c in edges)
    margs = {int(k): as_marginal(w, name=f"marginal of vertex {k}") for k, w in marginals.items()}
    g = GeneralGraphProblem(
        m=len(support_sizes),
        support_sizes=tuple(int(n) for n in support_sizes),
        edges=costs,
        gamma=tuple(sorted(margs)),
        marginals=margs,
    )
    return validate_general_problem(g)


def tree_as_general(p: TreeProblem) -> GeneralGraphProblem:
    return GeneralGraphProblem(p.m, p.support_sizes, p.edges, p.gamma, p.marginals)


@dataclass
class JunctionTree:
    clusters: list[tuple[int, ...]]
    tree_edges: list[tuple[int, int]]
    assignment: dict[int, int]  # graph edge index -> cluster index
    leaf_cluster: dict[int, int] = field(default_factory=dict)  # gamma vertex -> cluster index

    @property
    def width(self) -> int:
        return max(len(c) for c in self.clusters) - 1

    @property
    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in self.clusters]
        for a, b in self.tree_edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return [sorted(x) for x in nbrs]

    def separator(self, a: int, b: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.clusters[a]) & set(self.clusters[b])))

    @property
    def diameter(self) -> int:
        nbrs = self.neighbors
        d0 = hop_distances(nbrs, 0)
        far = int(np.argmax(d0))
        return max(hop_distances(nbrs, far))

    @classmethod
    def from_clusters(cls, clusters, tree_edges, g: GraphProblem) -> "JunctionTree":
        """Wrap a user-supplied decomposition; edges go to the first cluster covering them."""
        clusters = [tuple(sorted(int(v) for v in c)) for c in clusters]
        tree_edges = [(int(a), int(b)) for a, b in tree_edges]
        assignment = {}
        for i, e in enumerate(g.edges):
            for ci, c in enumerate(clusters):
                if e.tail in c and e.head in c:
                    assignment[i] = ci
                    break
        jt = cls(clusters, tree_edges, assignment)
        nbrs = jt.neighbors
        for k in g.gamma:
            for ci, c in enumerate(clusters):
                if c == (k,) and len(nbrs[ci]) <= 1:
                    jt.leaf_cluster[k] = ci
                    break
        return jt


def _min_fill_order(adj: dict[int, set[int]]) -> list[tuple[int, set[int]]]:
    adj = {v: set(w) for v, w in adj.items()}
    cliques = []
    while adj:
        def fill(v):
            nb = sorted(adj[v])
            return sum(1 for i, a in enumerate(nb) for b in nb[i + 1:] if b not in adj[a])

        v = min(adj, key=lambda x: (fill(x), len(adj[x]), x))
        nb = adj.pop(v)
        for a in nb:
            adj[a].discard(v)
            adj[a].update(nb - {a})
        cliques.append((v, {v} | nb))
    return cliques


def _contract(clusters: list[set], edges: set[frozenset], keep: int, gone: int):
    """Merge cluster ``gone`` into ``keep`` (must be adjacent)."""
    clusters[keep] |= clusters[gone]
    new = set()
    for e in edges:
        if gone not in e:
            new.add(e)
            continue
        (other,) = e - {gone}
        if other != keep:
            new.add(frozenset((keep, other)))
    clusters[gone] = None
    return new


def min_fill_decomposition(g: GraphProblem) -> JunctionTree:
    """Min-fill elimination cliques joined by a maximum-weight spanning tree.

    Clusters sharing a constrained vertex are then contracted so every
    constrained vertex sits in exactly one cluster, adjacent clusters that are
    subsets of their neighbour are absorbed, and singleton leaf clusters are
    attached for gamma.
    """
    adj = {v: set(g.neighbors[v]) for v in range(g.m)}
    elim = [c for _, c in _min_fill_order(adj)]
    clusters: list[set | None] = []
    for c in elim:
        if not any(c < d for d in elim) and c not in clusters:
            clusters.append(c)

    # Kruskal, heaviest separators first
    cand = sorted(
        ((len(clusters[i] & clusters[j]), i, j)
         for i in range(len(clusters)) for j in range(i + 1, len(clusters))),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    parent = list(range(len(clusters)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges: set[frozenset] = set()
    for w, i, j in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.add(frozenset((i, j)))

    for k in g.gamma:
        while True:
            holding = [i for i, c in enumerate(clusters) if c is not None and k in c]
            if len(holding) <= 1:
                break
            pair = next(((a, b) for a in holding for b in holding
                         if a < b and frozenset((a, b)) in edges), None)
            a, b = pair  # clusters holding k form a connected subtree
            edges = _contract(clusters, edges, a, b)

    changed = True
    while changed:
        changed = False
        for e in sorted(edges, key=sorted):
            a, b = sorted(e)
            if clusters[a] <= clusters[b]:
                edges = _contract(clusters, edges, b, a)
                changed = True
                break
            if clusters[b] <= clusters[a]:
                edges = _contract(clusters, edges, a, b)
                changed = True
                break

    live = [i for i, c in enumerate(clusters) if c is not None]
    remap = {old: new for new, old in enumerate(live)}
    final = [tuple(sorted(clusters[i])) for i in live]
    tree_edges = sorted(tuple(sorted((remap[a], remap[b]))) for a, b in (tuple(e) for e in edges))

    leaf_cluster = {}
    for k in g.gamma:
        host = next(i for i, c in enumerate(final) if k in c)
        final.append((k,))
        leaf_cluster[k] = len(final) - 1
        tree_edges.append((host, len(final) - 1))

    assignment = {}
    for i, e in enumerate(g.edges):
        assignment[i] = next(ci for ci, c in enumerate(final) if e.tail in c and e.head in c)
    return JunctionTree(final, tree_edges, assignment, leaf_cluster)


def validate_junction_tree(jt: JunctionTree, g: GraphProblem) -> JunctionTree:
    n_c = len(jt.clusters)
    if len(jt.tree_edges) != n_c - 1:
        _union_find_check(n_c, jt.tree_edges)
        raise Disconnected("cluster tree must have |clusters| - 1 edges")
    _union_find_check(n_c, jt.tree_edges)

    for i, e in enumerate(g.edges):
        if not any(e.tail in c and e.head in c for c in jt.clusters):
            raise CostNotCovered(f"no cluster contains edge ({e.tail}, {e.head})")
    for i, e in enumerate(g.edges):
        ci = jt.assignment.get(i)
        if ci is None or not (e.tail in jt.clusters[ci] and e.head in jt.clusters[ci]):
            raise FamilyPreservationViolated(f"edge ({e.tail}, {e.head}) is not assigned to a cluster containing it")
    if set(jt.assignment) != set(range(len(g.edges))):
        raise FamilyPreservationViolated("assignment refers to unknown edges")

    nbrs = jt.neighbors
    for v in range(g.m):
        holding = {i for i, c in enumerate(jt.clusters) if v in c}
        if not holding:
            continue
        start = min(holding)
        seen, stack = {start}, [start]
        while stack:
            x = stack.pop()
            for y in nbrs[x]:
                if y in holding and y not in seen:
                    seen.add(y)
                    stack.append(y)
        if seen != holding:
            raise RunningIntersectionViolated(
                f"clusters containing vertex {v} do not form a connected subtree"
            )

    for k in g.gamma:
        ci = jt.leaf_cluster.get(k)
        if ci is None or jt.clusters[ci] != (k,) or len(nbrs[ci]) != 1:
            raise LeafNotSingleton(f"constrained vertex {k} has no singleton leaf cluster")
        holding = [i for i, c in enumerate(jt.clusters) if k in c and i != ci]
        if len(holding) != 1:
            raise GammaNotIsolated(
                f"constrained vertex {k} appears in {len(holding)} non-leaf clusters; expected 1"
            )
    return jt


def cluster_costs(jt: JunctionTree, g: GraphProblem) -> dict[int, np.ndarray]:
    """Summed cost tensor per cluster, axes in sorted vertex order."""
    out = {}
    for ci, c in enumerate(jt.clusters):
        out[ci] = np.zeros([g.support_sizes[v] for v in c])
    for i, e in enumerate(g.edges):
        ci = jt.assignment[i]
        c = jt.clusters[ci]
        shape = [1] * len(c)
        a, b = c.index(e.tail), c.index(e.head)
        M = e.entries if a < b else e.entries.T
        shape[min(a, b)], shape[max(a, b)] = M.shape
        out[ci] = out[ci] + M.reshape(shape)
    return out


def _spread(msg: np.ndarray, sep: Sequence[int], cvars: Sequence[int], sizes) -> np.ndarray:
    shape = [sizes[v] if v in sep else 1 for v in cvars]
    return msg.reshape(shape)


class ClusterBP(MessagePassingTree):
    """Sinkhorn belief propagation over a junction tree."""

    def __init__(self, g: GraphProblem, jt: JunctionTree, eta: float):
        self.problem = g
        self.jt = jt
        self.sizes = g.support_sizes
        self.costs = cluster_costs(jt, g)
        self.log_pot = {ci: -C / eta for ci, C in self.costs.items()}
        super().__init__(jt.neighbors, jt.leaf_cluster, eta, g.marginals, g.support_sizes)
        self._sep = {}
        for a in range(self.n_nodes):
            for b in self.nbrs[a]:
                self._sep[(a, b)] = jt.separator(a, b)

    def _compute(self, src, dst):
        if src in self.node_leaf:
            k = self.node_leaf[src]
            return self.log_u[k] + self.log_mu[k]
        cvars = self.jt.clusters[src]
        T = self.log_pot[src]
        for j in self.nbrs[src]:
            if j != dst:
                T = T + _spread(self.message(j, src), self._sep[(j, src)], cvars, self.sizes)
        sep = self._sep[(src, dst)]
        axes = tuple(i for i, v in enumerate(cvars) if v not in sep)
        T = np.broadcast_to(T, [self.sizes[v] for v in cvars])
        return logsumexp(T, axis=axes) if axes else np.array(T)

    def log_belief(self, node: int) -> np.ndarray:
        if node in self.node_leaf:
            return self.leaf_log_projection(self.node_leaf[node])
        cvars = self.jt.clusters[node]
        T = self.log_pot[node]
        for j in self.nbrs[node]:
            T = T + _spread(self.message(j, node), self._sep[(j, node)], cvars, self.sizes)
        return np.broadcast_to(T, [self.sizes[v] for v in cvars]).copy()

    def cluster_marginal(self, node: int) -> np.ndarray:
        return np.exp(self.log_belief(node))

    def vertex_projection(self, v: int) -> np.ndarray:
        node = next(i for i, c in enumerate(self.jt.clusters) if v in c and i not in self.node_leaf)
        B = self.cluster_marginal(node)
        cvars = self.jt.clusters[node]
        axes = tuple(i for i, w in enumerate(cvars) if w != v)
        return B.sum(axis=axes) if axes else B

    def cluster_plans(self) -> dict[int, np.ndarray]:
        self.refresh_all()
        return {ci: self.cluster_marginal(ci)
                for ci in range(self.n_nodes) if ci not in self.node_leaf}


def cluster_cost(costs: Mapping[int, np.ndarray], plans: Mapping[int, np.ndarray]) -> float:
    return float(sum(np.sum(costs[ci] * plans[ci]) for ci in plans))


def round_clusters(plans, jt: JunctionTree, g: GraphProblem, costs):
    """Bimarginal rounding of each leaf's host cluster: x_k against the rest."""
    out = {ci: np.array(B, dtype=float) for ci, B in plans.items()}
    mass = float(np.sum(next(iter(out.values()))))
    if abs(mass - 1.0) > MASS_TOL:
        raise Inconsistent(f"cluster plans carry total mass {mass!r}; rounding needs unit mass")
    nbrs = jt.neighbors
    per_leaf = {}
    for k in g.gamma:
        host = nbrs[jt.leaf_cluster[k]][0]
        cvars = jt.clusters[host]
        a = cvars.index(k)
        T = np.moveaxis(out[host], a, 0)
        shape = T.shape
        M = T.reshape(shape[0], -1)
        per_leaf[k] = float(np.abs(g.marginals[k] - M.sum(axis=1)).sum())
        R = round_bimarginal(M, g.marginals[k], M.sum(axis=0))
        out[host] = np.moveaxis(R.reshape(shape), 0, a)
    report = RoundingReport(per_leaf, cluster_cost(costs, plans), cluster_cost(costs, out))
    return out, report


def solve_general_graph(
    g: GraphProblem,
    eps: float,
    rule: UpdateRule | None = None,
    jt: JunctionTree | None = None,
    max_iters: int | None = None,
    error_refresh_period: int | None = None,
) -> ApproxResult:
    """Run the epsilon-approximation pipeline over a junction tree of ``g``.

    The returned plans map each non-leaf cluster's vertex tuple to its
    (rounded) cluster marginal tensor.
    """
    rule = rule or UpdateRule()
    jt = jt if jt is not None else min_fill_decomposition(g)
    validate_junction_tree(jt, g)
    costs = cluster_costs(jt, g)
    nbrs = jt.neighbors
    rc = {k: float(np.max(costs[nbrs[jt.leaf_cluster[k]][0]])) for k in g.gamma}
    rc_gamma = max(rc.values())
    eta, eps_prime = schedule(eps, g.m, g.n_max, rc_gamma)
    if max_iters is None:
        max_iters = default_max_iters(len(g.gamma), rc_gamma, eta, eps_prime)
    engine = ClusterBP(g, jt, eta)
    cfg = SolverConfig(eps_prime, max_iters, error_refresh_period)
    engine, transcript = run(engine, rule, cfg)
    plans = engine.cluster_plans()
    rounded, report = round_clusters(plans, jt, g, costs)
    keyed = {jt.clusters[ci]: B for ci, B in rounded.items()}
    return ApproxResult(
        plans=keyed,
        cost=cluster_cost(costs, rounded),
        eta=eta,
        eps_prime=eps_prime,
        transcript=transcript,
        report=report,
        rc_per_leaf=rc,
        m=g.m,
        n_max=g.n_max,
    )
