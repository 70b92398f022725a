"""Barycenter of shifted bumps on a 1-D grid, compared with the exact LP when small.

    python3 scripts/barycenter_demo.py --n 15 --eps 0.05
"""
import argparse
import math

import numpy as np

from motgraph import build_barycenter_problem, certificate, compute_constants, solve_mot_eps
from motgraph.oracle import LP_LIMIT, lp_solve_small
from motgraph.pipeline import barycenter_estimate
from motgraph.sinkhorn import UpdateRule


def bump(x, center, width):
    w = np.exp(-0.5 * ((x - center) / width) ** 2)
    return w / w.sum()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=15)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    x = np.linspace(0, 1, args.n)
    C = (x[:, None] - x[None, :]) ** 2
    margs = [bump(x, 0.25, 0.08), bump(x, 0.75, 0.08)]
    p = build_barycenter_problem(margs, C)
    c = compute_constants(p)
    print(f"L={len(p.gamma)} n={args.n} rc_gamma={c.rc_gamma:.4g} diameter={c.diameter}")
    res = solve_mot_eps(p, args.eps, rule=UpdateRule("random", args.seed))
    print(f"cost={res.cost:.6f} certificate={certificate(res):.4g} tau={res.tau}")
    if math.prod(p.support_sizes) <= LP_LIMIT:
        _, opt = lp_solve_small(p)
        print(f"LP optimum={opt:.6f} gap={res.cost - opt:.2e} (eps={args.eps})")
    bary = barycenter_estimate(p, res)
    for xi, w in zip(x, bary):
        print(f"{xi:5.2f} {'#' * int(round(200 * w))}")


if __name__ == "__main__":
    main()
