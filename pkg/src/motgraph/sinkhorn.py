"""Multi-marginal Sinkhorn iterations driven through a message-passing engine."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bp import MessagePassingTree, generalized_kl
from .errors import MaxItersExceeded

RULES = ("random", "cyclic", "greedy")


@dataclass(frozen=True)
class UpdateRule:
    variant: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in RULES:
            raise ValueError(f"unknown update rule {self.variant!r}; expected one of {RULES}")


@dataclass(frozen=True)
class SolverConfig:
    eps_prime: float
    max_iters: int
    error_refresh_period: int | None = None  # None -> |Gamma|

    def __post_init__(self):
        if not self.eps_prime > 0:
            raise ValueError("eps_prime must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.error_refresh_period is not None and self.error_refresh_period < 1:
            raise ValueError("error_refresh_period must be >= 1")


@dataclass
class TranscriptRow:
    t: int
    k: int  # -1 on the initial row
    e_t: float  # nan unless the error was evaluated exactly at this row
    psi: float
    msgs: int
    wall_ns: int
    # diagnostics kept in memory only
    kl_decrease: float = math.nan  # eta * KL(mu_k || P_k(B(Lambda^{(t-1)})))
    pinsker: float = math.nan  # (eta / 2) * ||mu_k - P_k(B(Lambda^{(t-1)}))||_1^2
    lam_range: float = math.nan
    mass_before: float = math.nan

    @property
    def exact(self) -> bool:
        return not math.isnan(self.e_t)


@dataclass
class Transcript:
    seed: int
    rule: str
    rows: list[TranscriptRow] = field(default_factory=list)
    tau: int = 0

    CSV_HEADER = ("t", "k", "e_t", "psi", "msgs", "wall_ns")

    @property
    def psi(self) -> np.ndarray:
        return np.array([r.psi for r in self.rows])

    @property
    def total_messages(self) -> int:
        return sum(r.msgs for r in self.rows)

    @property
    def final_error(self) -> float:
        exact = [r.e_t for r in self.rows if r.exact]
        return exact[-1] if exact else math.nan

    def to_csv(self, fh=None, timing: bool = False, vertex_offset: int = 0) -> str | None:
        """Write ``t,k,e_t,psi,msgs,wall_ns``.

        Floats use ``repr`` so values round-trip.  Non-exact errors and (unless
        ``timing``) wall times are left empty, which keeps repeated runs
        byte-identical.
        """
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for r in self.rows:
            w.writerow([
                r.t,
                r.k + vertex_offset if r.k >= 0 else "",
                repr(r.e_t) if r.exact else "",
                repr(r.psi),
                r.msgs,
                r.wall_ns if timing else "",
            ])
        if fh is None:
            return out.getvalue()
        return None


class _Selector:
    def __init__(self, rule: UpdateRule, gamma: Sequence[int]):
        self.rule = rule
        self.gamma = list(gamma)
        self.rng = np.random.Generator(np.random.PCG64(rule.seed))
        self._pos = -1

    def next(self, prev: int, errors: dict[int, float] | None) -> int:
        if self.rule.variant == "random":
            choices = [k for k in self.gamma if k != prev] or self.gamma
            return choices[int(self.rng.integers(len(choices)))]
        if self.rule.variant == "cyclic":
            self._pos = (self._pos + 1) % len(self.gamma)
            return self.gamma[self._pos]
        # greedy: largest marginal violation, smallest index on ties
        best = max(errors.values())
        return min(k for k, v in errors.items() if v == best)


def iteration_expectation_bound(n_gamma: int, rc_gamma: float, eta: float, eps_prime: float) -> float:
    return 8.0 * n_gamma**2 * rc_gamma / (eta * eps_prime)


def iteration_probability_bound(n_gamma, rc_gamma, eta, eps_prime, delta: float) -> float:
    return 48.0 * n_gamma**2 * rc_gamma / (eta * eps_prime) * math.log(1.0 / delta)


def default_max_iters(n_gamma, rc_gamma, eta, eps_prime, delta: float = 0.01) -> int:
    bound = iteration_probability_bound(n_gamma, rc_gamma, eta, eps_prime, delta)
    if not math.isfinite(bound) or bound <= 0:
        return 10 * max(n_gamma, 1)
    return int(math.ceil(10 * bound))


def sinkhorn_step(engine: MessagePassingTree, k: int) -> None:
    engine.sinkhorn_step(k)


def lambda_range(engine: MessagePassingTree, k: int) -> float:
    return engine.lambda_range(k)


def run(engine: MessagePassingTree, rule: UpdateRule, cfg: SolverConfig):
    """Iterate until the exact l1 marginal error drops below ``cfg.eps_prime``.

    Between two leaves only the messages on the connecting path are refreshed.
    The exact error needs every leaf projection, so a full message pass is
    made every ``error_refresh_period`` iterations, whenever the cheap stale
    estimate drops below the threshold, and before stopping.

    Returns ``(engine, transcript)``; the engine is mutated in place.
    """
    gamma = engine.gamma
    eta = engine.eta
    period = cfg.error_refresh_period or len(gamma)
    if rule.variant == "greedy":
        period = 1
    sel = _Selector(rule, gamma)
    tr = Transcript(seed=rule.seed, rule=rule.variant)

    start = time.perf_counter_ns()
    msgs = engine.refresh_all()
    errors = engine.marginal_errors()
    estimate = dict(errors)
    tr.rows.append(TranscriptRow(0, -1, sum(errors.values()), engine.dual_objective(), msgs,
                                 time.perf_counter_ns() - start))

    prev = gamma[0]
    for t in range(1, cfg.max_iters + 1):
        k = sel.next(prev, errors)
        msgs = engine.refresh_path(prev, k)
        p_before = engine.leaf_projection(k)
        mu = engine.mu[k]
        l1 = float(np.abs(p_before - mu).sum())
        kl = eta * generalized_kl(mu, p_before)
        engine.sinkhorn_step(k)
        # after the step P_k = mu_k exactly, so leaf k gives the total mass
        psi = engine.dual_objective(engine.leaf_node[k])
        estimate[k] = 0.0
        e_t = math.nan
        if t % period == 0 or sum(estimate.values()) < cfg.eps_prime:
            msgs += engine.refresh_all()
            errors = engine.marginal_errors()
            estimate = dict(errors)
            e_t = sum(errors.values())
        tr.rows.append(TranscriptRow(
            t, k, e_t, psi, msgs, time.perf_counter_ns() - start,
            kl_decrease=kl,
            pinsker=0.5 * eta * l1**2,
            lam_range=engine.lambda_range(k),
            mass_before=float(p_before.sum()),
        ))
        tr.tau = t
        if not math.isnan(e_t) and e_t < cfg.eps_prime:
            return engine, tr
        prev = k
    raise MaxItersExceeded(
        f"no convergence to eps'={cfg.eps_prime:g} within {cfg.max_iters} iterations",
        transcript=tr,
        engine=engine,
    )
