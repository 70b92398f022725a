"""Iteration-count benchmark against the randomized iteration bounds.

A config is a JSON object::

    {
      "instances": [
        {"id": "star4", "family": "star", "size": 4, "n": 8, "cost": "uniform", "seed": 0},
        {"id": "custom", "file": "problem.json"}
      ],
      "eps": [1.0, 0.5],
      "seeds": 20,            # int (0..seeds-1) or explicit list
      "delta": 0.1,
      "rule": "random"
    }

One record is produced per (instance, eps, seed) and one summary per
(instance, eps).  A summary fails when mean(tau) exceeds the expectation
bound or when the fraction of seeds above the delta-bound exceeds
delta plus three binomial standard deviations.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .generators import random_tree_problem
from .pipeline import schedule
from .problem import TreeProblem, compute_constants
from .bp import TreeBP
from .sinkhorn import (
    SolverConfig,
    UpdateRule,
    default_max_iters,
    iteration_expectation_bound,
    iteration_probability_bound,
    run,
)


@dataclass
class BenchRecord:
    instance: str
    seed: int
    rule: str
    eps: float
    eta: float
    eps_prime: float
    tau: int
    expectation_bound: float
    probability_bound: float
    wall_s: float
    messages: int
    diameter: int
    avg_leaf_distance: float


@dataclass
class BenchSummary:
    instance: str
    eps: float
    seeds: int
    mean_tau: float
    max_tau: int
    expectation_bound: float
    probability_bound: float
    delta: float
    frac_over_probability_bound: float
    allowed_fraction: float
    passed: bool


class BenchConfigError(ValueError):
    pass


def load_config(doc: dict, base_dir: Path | None = None):
    """Normalize a config dict; returns ``(instances, eps_grid, seeds, delta, rule)``."""
    from .io import read_problem

    try:
        raw = doc["instances"]
        eps_grid = [float(e) for e in doc["eps"]]
    except (KeyError, TypeError) as exc:
        raise BenchConfigError(f"bench config needs 'instances' and 'eps' ({exc})") from exc
    seeds = doc.get("seeds", 20)
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    delta = float(doc.get("delta", 0.1))
    if not 0 < delta < 1:
        raise BenchConfigError("delta must lie in (0, 1)")
    rule = doc.get("rule", "random")
    instances = []
    for i, spec in enumerate(raw):
        name = spec.get("id", f"instance{i + 1}")
        if "file" in spec:
            path = Path(spec["file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            p = read_problem(path)
            if not isinstance(p, TreeProblem):
                raise BenchConfigError(f"{name}: bench runs on tree problems only")
        else:
            n = spec.get("n", 4)
            p = random_tree_problem(
                np.random.default_rng(spec.get("seed", i)),
                family=spec.get("family", "random"),
                size=int(spec.get("size", 4)),
                n=tuple(n) if isinstance(n, list) else int(n),
                cost=spec.get("cost", "uniform"),
            )
        instances.append((name, p))
    return instances, eps_grid, seeds, delta, rule


def run_one(name: str, problem: TreeProblem, eps: float, seed: int, rule: str,
            delta: float, max_iters: int | None = None) -> BenchRecord:
    """Solve once with an exact per-iteration error so tau is the first hitting time."""
    consts = compute_constants(problem)
    eta, eps_prime = schedule(eps, problem.m, problem.n_max, consts.rc_gamma)
    ng = len(problem.gamma)
    if max_iters is None:
        max_iters = default_max_iters(ng, consts.rc_gamma, eta, eps_prime)
    start = time.perf_counter()
    engine = TreeBP(problem, eta)
    _, tr = run(engine, UpdateRule(rule, seed), SolverConfig(eps_prime, max_iters, 1))
    return BenchRecord(
        instance=name,
        seed=seed,
        rule=rule,
        eps=eps,
        eta=eta,
        eps_prime=eps_prime,
        tau=tr.tau,
        expectation_bound=iteration_expectation_bound(ng, consts.rc_gamma, eta, eps_prime),
        probability_bound=iteration_probability_bound(ng, consts.rc_gamma, eta, eps_prime, delta),
        wall_s=time.perf_counter() - start,
        messages=tr.total_messages,
        diameter=consts.diameter,
        avg_leaf_distance=consts.avg_leaf_distance,
    )


def _star(args):
    return run_one(*args)


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("MOTGRAPH_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def summarize(records: list[BenchRecord], delta: float) -> list[BenchSummary]:
    groups: dict[tuple[str, float], list[BenchRecord]] = {}
    for r in records:
        groups.setdefault((r.instance, r.eps), []).append(r)
    out = []
    for (name, eps), rs in groups.items():
        taus = np.array([r.tau for r in rs])
        prob = rs[0].probability_bound
        over = float(np.mean(taus > prob))
        allowed = delta + 3.0 * math.sqrt(delta * (1 - delta) / len(rs))
        mean_tau = float(taus.mean())
        out.append(BenchSummary(
            instance=name,
            eps=eps,
            seeds=len(rs),
            mean_tau=mean_tau,
            max_tau=int(taus.max()),
            expectation_bound=rs[0].expectation_bound,
            probability_bound=prob,
            delta=delta,
            frac_over_probability_bound=over,
            allowed_fraction=allowed,
            passed=mean_tau <= rs[0].expectation_bound and over <= allowed,
        ))
    return out


def run_bench(instances, eps_grid, seeds, delta=0.1, rule="random", workers=None):
    """Records in (instance, eps, seed) order plus per-(instance, eps) summaries."""
    tasks = [(name, p, eps, s, rule, delta) for name, p in instances for eps in eps_grid for s in seeds]
    workers = workers or worker_count(len(tasks))
    if workers == 1:
        records = [_star(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_star, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return records, summarize(records, delta)


def _write_rows(rows, cls, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in fields(cls)]
        w.writerow(names)
        for r in rows:
            d = asdict(r)
            w.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in names])


def summary_path(out_csv) -> Path:
    out_csv = Path(out_csv)
    return out_csv.with_name(out_csv.stem + "_summary.csv")


def write_bench(records, summaries, out_csv) -> Path:
    _write_rows(records, BenchRecord, out_csv)
    spath = summary_path(out_csv)
    _write_rows(summaries, BenchSummary, spath)
    return spath
