"""Brute-force references over the full ``n_1 x ... x n_m`` tensor.

Nothing here uses the graph decomposition beyond assembling the cost, so the
structured solvers can be checked against it.  Only usable at desk scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .bp import DualState, logsumexp, safe_log
from .errors import Infeasible, TooLarge

DENSE_LIMIT = 10**6
LP_LIMIT = 4096


def _guard(problem, limit=DENSE_LIMIT):
    size = math.prod(problem.support_sizes)
    if size > limit:
        raise TooLarge(f"dense tensor would have {size} entries (limit {limit})")
    return size


def _expand(vec_or_mat, axes, m):
    """Reshape so the given axes of an m-mode tensor carry the data and the rest broadcast."""
    shape = [1] * m
    for ax, n in zip(axes, np.shape(vec_or_mat)):
        shape[ax] = n
    arr = np.asarray(vec_or_mat, dtype=float)
    if len(axes) == 2 and axes[0] > axes[1]:
        arr = arr.T
        shape = [1] * m
        shape[axes[1]], shape[axes[0]] = arr.shape
    return arr.reshape(shape)


def dense_cost(problem) -> np.ndarray:
    _guard(problem)
    C = np.zeros(problem.support_sizes)
    for e in problem.edges:
        C = C + _expand(e.entries, (e.tail, e.head), problem.m)
    return C


def dense_log_plan(problem, eta: float, log_u: dict) -> np.ndarray:
    """log of B(Lambda) = exp(-C/eta) * prod_k u_k mu_k."""
    logB = -dense_cost(problem) / eta
    for k in problem.gamma:
        w = np.asarray(log_u[k]) + safe_log(problem.marginals[k])
        logB = logB + _expand(w, (k,), problem.m)
    return logB


def dense_plan(problem, eta: float, log_u: dict) -> np.ndarray:
    return np.exp(dense_log_plan(problem, eta, log_u))


def dense_projection(B: np.ndarray, k: int) -> np.ndarray:
    axes = tuple(a for a in range(B.ndim) if a != k)
    return B.sum(axis=axes)


def dense_pairwise(B: np.ndarray, k1: int, k2: int) -> np.ndarray:
    axes = tuple(a for a in range(B.ndim) if a not in (k1, k2))
    P = B.sum(axis=axes)
    return P if k1 < k2 else P.T


def dense_dual_objective(problem, eta: float, log_u: dict) -> float:
    mass = float(np.exp(logsumexp(dense_log_plan(problem, eta, log_u))))
    lin = sum(float(problem.marginals[k] @ (eta * np.asarray(log_u[k]))) for k in problem.gamma)
    return eta * mass - lin


def dense_sinkhorn(
    problem,
    eta: float,
    eps_prime: float,
    order: Iterable[int] | None = None,
    max_iters: int = 100_000,
    history: list | None = None,
) -> DualState:
    """Multiplicative updates ``u_k <- u_k * mu_k / P_k(B)`` on the dense tensor.

    ``order`` fixes the sequence of updated marginals (cyclic over gamma by
    default).  Stops once the l1 marginal error is below ``eps_prime`` after
    an update.  Off the support of ``mu_k`` the scaling is set so that the
    marginal there would be 1 (it is multiplied by zero anyway).  When
    ``history`` is a list, ``psi`` after every update is appended to it.
    """
    _guard(problem)
    m = problem.m
    gamma = list(problem.gamma)
    logK = -dense_cost(problem) / eta
    log_u = {k: np.zeros(problem.support_sizes[k]) for k in gamma}
    log_mu = {k: safe_log(problem.marginals[k]) for k in gamma}
    seq = iter(order) if order is not None else (gamma[i % len(gamma)] for i in range(max_iters))
    updated = set()
    for t, k in enumerate(seq, start=1):
        if t > max_iters:
            break
        logB = logK
        for j in gamma:
            logB = logB + _expand(log_u[j] + log_mu[j], (j,), m)
        other = tuple(a for a in range(m) if a != k)
        logP = logsumexp(logB, axis=other)
        mu = problem.marginals[k]
        on = mu > 0
        new = log_u[k].copy()
        new[on] = log_u[k][on] + log_mu[k][on] - logP[on]
        # off support: 1 / (P_k / (u_k mu_k)) computed without the mu factor
        if (~on).any():
            logB_wo = logK
            for j in gamma:
                if j != k:
                    logB_wo = logB_wo + _expand(log_u[j] + log_mu[j], (j,), m)
            msg = logsumexp(logB_wo, axis=other)
            new[~on] = -msg[~on]
        log_u[k] = new
        updated.add(k)
        if history is not None:
            history.append(dense_dual_objective(problem, eta, log_u))
        B = dense_plan(problem, eta, log_u)
        err = sum(np.abs(dense_projection(B, j) - problem.marginals[j]).sum() for j in gamma)
        if order is None and err < eps_prime:
            break
    return DualState(eta, log_u, updated)


# ---------------------------------------------------------------------------
# exact LP


@dataclass
class SimplexResult:
    x: np.ndarray
    value: float
    y: np.ndarray  # equality-constraint duals (0 on dropped redundant rows)
    basis: list[int]
    pivots: int


def _pivot(T, i, j):
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    T -= np.outer(col, T[i])


def _bland(T, basis, n_enter, tol):
    pivots = 0
    while True:
        neg = np.nonzero(T[-1, :n_enter] < -tol)[0]
        if neg.size == 0:
            return pivots
        j = int(neg[0])
        col = T[:-1, j]
        pos = np.nonzero(col > tol)[0]
        if pos.size == 0:
            raise Infeasible("LP is unbounded; the marginal constraints are inconsistent")
        ratios = T[pos, -1] / col[pos]
        rmin = ratios.min()
        tied = pos[ratios <= rmin + tol]
        i = int(min(tied, key=lambda r: basis[r]))
        _pivot(T, i, j)
        basis[i] = j
        pivots += 1


def simplex(c, A, b, tol: float = 1e-10) -> SimplexResult:
    """Two-phase dense tableau simplex with Bland's rule for ``min c x, A x = b, x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    rows, n = A.shape
    T = np.zeros((rows + 1, n + rows + 1))
    T[:rows, :n] = A
    T[:rows, n:n + rows] = np.eye(rows)
    T[:rows, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + rows))
    pivots = _bland(T, basis, n + rows, tol)
    if -T[-1, -1] > 1e-9:
        raise Infeasible(f"phase one ended with infeasibility {-T[-1, -1]:.3g}")

    keep = list(range(rows))
    for i in range(rows):
        if basis[i] >= n:
            cand = np.nonzero(np.abs(T[i, :n]) > tol)[0]
            if cand.size:
                _pivot(T, i, int(cand[0]))
                basis[i] = int(cand[0])
                pivots += 1
            else:
                keep.remove(i)
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[i] for i in keep]
    kept_rows = keep

    T[-1] = 0.0
    T[-1, :n] = c
    for i, j in enumerate(basis):
        T[-1] -= c[j] * T[i]
    pivots += _bland(T, basis, n, tol)

    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    x = np.maximum(x, 0.0)
    Ak = A[kept_rows]
    Bmat = Ak[:, basis]
    yk = np.linalg.solve(Bmat.T, c[basis])
    y = np.zeros(rows)
    y[kept_rows] = yk
    y[neg] *= -1
    return SimplexResult(x=x, value=float(c @ x), y=y, basis=basis, pivots=pivots)


def marginal_constraints(problem):
    """Equality system ``A vec(B) = b`` for the gamma marginals (row-major vec)."""
    shape = problem.support_sizes
    N = math.prod(shape)
    idx = np.arange(N).reshape(shape)
    blocks, rhs = [], []
    for k in problem.gamma:
        for xk in range(shape[k]):
            row = np.zeros(N)
            row[np.take(idx, xk, axis=k).ravel()] = 1.0
            blocks.append(row)
            rhs.append(problem.marginals[k][xk])
    return np.array(blocks), np.array(rhs)


def lp_solve_small(problem, return_details: bool = False):
    """Exact unregularized optimum over the full tensor.

    Returns ``(plan_tensor, optimum)``; with ``return_details`` also the raw
    :class:`SimplexResult` and the constraint system.
    """
    size = _guard(problem, LP_LIMIT)
    C = dense_cost(problem)
    A, b = marginal_constraints(problem)
    res = simplex(C.ravel(), A, b)
    X = res.x.reshape(problem.support_sizes)
    assert X.size == size
    if return_details:
        return X, res.value, res, (A, b)
    return X, res.value
