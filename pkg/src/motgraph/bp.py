"""Log-domain belief propagation on trees.

A solving unit is a :class:`TreeBP` (or :class:`motgraph.junction.ClusterBP`):
it owns the dual state (scaling vectors ``u_k`` kept as ``log u_k``) and the
message cache with its dirty set.  All arithmetic happens on logs; kernels are
stored as ``-C / eta`` and never exponentiated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NeverUpdated, StaleDependency
from .problem import TreeProblem


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """Max-shifted log-sum-exp that maps an all ``-inf`` slice to ``-inf``."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return out.reshape(())[()]
    return np.squeeze(out, axis=axis)


def safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def log_kernel(C, eta: float) -> np.ndarray:
    if eta <= 0:
        raise ValueError("eta must be positive")
    return -np.asarray(C, dtype=float) / eta


def generalized_kl(mu: np.ndarray, p: np.ndarray) -> float:
    """``sum mu log(mu/p) - sum mu + sum p``; equals KL when both have unit mass."""
    mask = mu > 0
    return float(np.sum(mu[mask] * (np.log(mu[mask]) - np.log(p[mask]))) - mu.sum() + p.sum())


@dataclass
class DualState:
    eta: float
    log_u: dict[int, np.ndarray]
    updated: set[int] = field(default_factory=set)

    def lam(self, k: int) -> np.ndarray:
        return self.eta * self.log_u[k]


@dataclass
class MessageTable:
    log_messages: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    dirty: set[tuple[int, int]] = field(default_factory=set)
    computed: int = 0


class MessagePassingTree:
    """Tree topology, message cache and dirty tracking shared by both engines.

    Subclasses supply ``_compute(src, dst)`` (log message along a directed
    tree edge) and ``log_belief(node)`` (unnormalized log marginal of a node).
    Constrained vertex ``k`` lives at tree node ``self.leaf_node[k]``.
    """

    def __init__(self, nbrs, leaf_node: dict[int, int], eta: float, mu: dict[int, np.ndarray], sizes):
        self.nbrs = [sorted(x) for x in nbrs]
        self.n_nodes = len(self.nbrs)
        self.gamma = tuple(sorted(leaf_node))
        self.leaf_node = dict(leaf_node)
        self.node_leaf = {v: k for k, v in leaf_node.items()}
        self.mu = {k: np.asarray(mu[k], dtype=float) for k in self.gamma}
        self.log_mu = {k: safe_log(self.mu[k]) for k in self.gamma}
        self.state = DualState(eta, {k: np.zeros(sizes[k]) for k in self.gamma})
        self.table = MessageTable()
        directed = [(a, b) for a in range(self.n_nodes) for b in self.nbrs[a]]
        self.table.dirty = set(directed)
        self._toward = {}
        for k in self.gamma:
            self._toward[k] = self._next_hop_to(self.leaf_node[k])
        # messages whose source side contains leaf k
        self._away = {k: self._edges_away(self.leaf_node[k]) for k in self.gamma}

    # -- topology -----------------------------------------------------------
    def _bfs(self, root):
        order, parent = [root], {root: None}
        for v in order:
            for w in self.nbrs[v]:
                if w not in parent:
                    parent[w] = v
                    order.append(w)
        return order, parent

    def _next_hop_to(self, target):
        _, parent = self._bfs(target)
        return parent

    def _edges_away(self, root):
        order, parent = self._bfs(root)
        return [(parent[v], v) for v in order[1:]]

    def node_path(self, a: int, b: int) -> list[int]:
        """Node path between the leaf nodes of constrained vertices a and b."""
        hop = self._toward[b]
        path = [self.leaf_node[a]]
        while path[-1] != self.leaf_node[b]:
            path.append(hop[path[-1]])
        return path

    @property
    def eta(self) -> float:
        return self.state.eta

    @property
    def log_u(self) -> dict[int, np.ndarray]:
        return self.state.log_u

    def leaf_neighbor_node(self, k: int) -> int:
        return self.nbrs[self.leaf_node[k]][0]

    # -- messages -----------------------------------------------------------
    def is_clean(self, src: int, dst: int) -> bool:
        return (src, dst) not in self.table.dirty

    def message(self, src: int, dst: int) -> np.ndarray:
        if not self.is_clean(src, dst):
            raise StaleDependency(f"message {src}->{dst} is stale")
        return self.table.log_messages[(src, dst)]

    def _upstream(self, src, dst):
        if src in self.node_leaf:
            return []
        return [(j, src) for j in self.nbrs[src] if j != dst]

    def update_message(self, src: int, dst: int) -> None:
        for dep in self._upstream(src, dst):
            if dep in self.table.dirty:
                raise StaleDependency(f"message {dep[0]}->{dep[1]} needed by {src}->{dst} is stale")
        self.table.log_messages[(src, dst)] = self._compute(src, dst)
        self.table.dirty.discard((src, dst))
        self.table.computed += 1

    def refresh_path(self, a: int, b: int) -> int:
        """Recompute every message on the path from leaf ``a`` toward leaf ``b``."""
        if a == b:
            return 0
        path = self.node_path(a, b)
        for src, dst in zip(path[:-1], path[1:]):
            self.update_message(src, dst)
        return len(path) - 1

    def refresh_all(self) -> int:
        """Recompute every stale message (upward then downward pass)."""
        order, parent = self._bfs(0)
        count = 0
        for v in reversed(order[1:]):
            if (v, parent[v]) in self.table.dirty:
                self.update_message(v, parent[v])
                count += 1
        for v in order[1:]:
            if (parent[v], v) in self.table.dirty:
                self.update_message(parent[v], v)
                count += 1
        return count

    def _incoming(self, node, exclude=None):
        msgs = [self.message(j, node) for j in self.nbrs[node] if j != exclude]
        return msgs

    # -- dual state ---------------------------------------------------------
    def set_log_u(self, k: int, value: np.ndarray) -> None:
        self.state.log_u[k] = np.asarray(value, dtype=float)
        self.table.dirty.update(self._away[k])

    def leaf_log_projection(self, k: int) -> np.ndarray:
        node = self.leaf_node[k]
        return self.log_u[k] + self.log_mu[k] + self.message(self.nbrs[node][0], node)

    def leaf_projection(self, k: int) -> np.ndarray:
        return np.exp(self.leaf_log_projection(k))

    def dual_gradient(self, k: int) -> np.ndarray:
        return self.leaf_projection(k) - self.mu[k]

    def sinkhorn_step(self, k: int) -> None:
        """Exact block minimization in ``lambda_k``: ``u_k <- 1 / m_{l_k -> k}``."""
        node = self.leaf_node[k]
        m = self.message(self.nbrs[node][0], node)
        self.set_log_u(k, -m)
        self.state.updated.add(k)

    def lambda_range(self, k: int) -> float:
        if k not in self.state.updated:
            raise NeverUpdated(f"vertex {k} has not been updated yet")
        lam = self.state.lam(k)
        return float(lam.max() - lam.min())

    def _clean_root(self):
        for v in range(self.n_nodes):
            if all(self.is_clean(j, v) for j in self.nbrs[v]):
                return v
        raise StaleDependency("no node has all incoming messages up to date")

    def log_total_mass(self, node: int | None = None) -> float:
        if node is None:
            node = self._clean_root()
        return float(logsumexp(self.log_belief(node)))

    def total_mass(self, node: int | None = None) -> float:
        return float(np.exp(self.log_total_mass(node)))

    def linear_term(self) -> float:
        return float(sum(self.mu[k] @ self.state.lam(k) for k in self.gamma))

    def dual_objective(self, node: int | None = None) -> float:
        """psi = eta * P(B(Lambda)) - sum_k mu_k^T lambda_k."""
        return self.eta * self.total_mass(node) - self.linear_term()

    def marginal_errors(self) -> dict[int, float]:
        return {k: float(np.abs(self.leaf_projection(k) - self.mu[k]).sum()) for k in self.gamma}

    def copy_state(self) -> DualState:
        return DualState(self.eta, {k: v.copy() for k, v in self.log_u.items()}, set(self.state.updated))

    def load_state(self, state: DualState) -> None:
        for k in self.gamma:
            self.set_log_u(k, state.log_u[k].copy())
        self.state.updated = set(state.updated)


class TreeBP(MessagePassingTree):
    """Sinkhorn belief propagation on a tree problem.

    Vertex ids double as node ids.  Messages ``l -> k`` are vectors over
    ``x_k``; each update is one ``n_k x n_l`` log-sum-exp.
    """

    def __init__(self, problem: TreeProblem, eta: float):
        self.problem = problem
        self._logk = {}
        for e in problem.edges:
            lk = log_kernel(e.entries, eta)
            self._logk[(e.tail, e.head)] = np.ascontiguousarray(lk)
            self._logk[(e.head, e.tail)] = np.ascontiguousarray(lk.T)
        super().__init__(
            problem.neighbors,
            {k: k for k in problem.gamma},
            eta,
            problem.marginals,
            problem.support_sizes,
        )

    def oriented_log_kernel(self, rows: int, cols: int) -> np.ndarray:
        return self._logk[(rows, cols)]

    def _compute(self, src, dst):
        K = self._logk[(dst, src)]
        if src in self.node_leaf:
            w = self.log_u[src] + self.log_mu[src]
        else:
            w = np.zeros(self.problem.support_sizes[src])
            for msg in self._incoming(src, exclude=dst):
                w = w + msg
        return logsumexp(K + w[None, :], axis=1)

    def log_belief(self, node: int) -> np.ndarray:
        if node in self.node_leaf:
            return self.leaf_log_projection(node)
        w = np.zeros(self.problem.support_sizes[node])
        for msg in self._incoming(node):
            w = w + msg
        return w

    def internal_projection(self, k: int) -> np.ndarray:
        return np.exp(self.log_belief(k))

    def projection(self, k: int) -> np.ndarray:
        return np.exp(self.log_belief(k))

    def _side_log_weight(self, a: int, b: int) -> np.ndarray:
        """Everything entering ``a`` except from ``b``, plus u*mu if a is constrained."""
        if a in self.node_leaf:
            return self.log_u[a] + self.log_mu[a]
        w = np.zeros(self.problem.support_sizes[a])
        for msg in self._incoming(a, exclude=b):
            w = w + msg
        return w

    def log_pairwise_projection(self, a: int, b: int) -> np.ndarray:
        alpha = self._side_log_weight(a, b)
        beta = self._side_log_weight(b, a)
        return alpha[:, None] + self._logk[(a, b)] + beta[None, :]

    def pairwise_projection(self, a: int, b: int) -> np.ndarray:
        """Two-vertex marginal of B(Lambda) on edge (a, b), axis 0 indexing x_a."""
        return np.exp(self.log_pairwise_projection(a, b))

    def edge_plans(self) -> dict[tuple[int, int], np.ndarray]:
        self.refresh_all()
        return {e.key: self.pairwise_projection(e.tail, e.head) for e in self.problem.edges}
