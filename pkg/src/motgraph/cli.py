"""Command-line front end.

Exit codes: 0 success, 1 invalid input (the violated invariant is named on
stderr), 2 iteration cap reached (partial output is still written), 3 a
check (oracle gap or bench envelope) failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .errors import MaxItersExceeded, MOTError
from .io import ProblemFileError, read_problem, result_to_dict, write_json
from .junction import min_fill_decomposition, solve_general_graph
from .oracle import lp_solve_small
from .pipeline import barycenter_estimate, certificate, solve_mot_eps
from .problem import TreeProblem, build_barycenter_problem, compute_constants
from .sinkhorn import UpdateRule

EXIT_OK, EXIT_INVALID, EXIT_MAXITER, EXIT_CHECK = 0, 1, 2, 3


def transcript_path(out: Path) -> Path:
    return out.with_name(out.stem + ".transcript.csv")


def _write_transcript(tr, out: Path | None, timing: bool):
    if out is None or tr is None:
        return
    with open(transcript_path(out), "w", newline="", encoding="utf-8") as fh:
        tr.to_csv(fh, timing=timing, vertex_offset=1)


def _solve(problem, args):
    rule = UpdateRule(args.rule, args.seed)
    if isinstance(problem, TreeProblem):
        return solve_mot_eps(problem, args.eps, rule=rule, max_iters=args.max_iters)
    return solve_general_graph(problem, args.eps, rule=rule, max_iters=args.max_iters)


def _partial(exc: MaxItersExceeded, out: Path | None, timing: bool, **extra):
    tr = exc.transcript
    doc = {
        "status": "max_iters_exceeded",
        "message": str(exc),
        "tau": tr.tau if tr else None,
        "last_exact_error": tr.final_error if tr else None,
        "psi": tr.rows[-1].psi if tr and tr.rows else None,
        **extra,
    }
    print(f"MaxItersExceeded: {exc}", file=sys.stderr)
    if out is not None:
        write_json(_clean(doc), out)
        _write_transcript(tr, out, timing)
    return EXIT_MAXITER


def _clean(doc):
    if isinstance(doc, float) and not math.isfinite(doc):
        return repr(doc)
    if isinstance(doc, dict):
        return {k: _clean(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_clean(v) for v in doc]
    return doc


def cmd_solve(args) -> int:
    problem = read_problem(args.problem)
    out = Path(args.out) if args.out else None
    try:
        res = _solve(problem, args)
    except MaxItersExceeded as exc:
        return _partial(exc, out, args.timing)
    cert = certificate(res)
    doc = result_to_dict(problem, res, cert, status="ok", eps=args.eps, rule=args.rule, seed=args.seed)
    print(f"cost {res.cost!r}  certificate {cert!r}  tau {res.tau}")
    if out is not None:
        write_json(_clean(doc), out)
        _write_transcript(res.transcript, out, args.timing)
    return EXIT_OK


def _load_array_doc(path, key):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        if key not in doc:
            raise ProblemFileError(f"{path}: expected key {key!r}")
        doc = doc[key]
    return doc


def cmd_barycenter(args) -> int:
    marginals = _load_array_doc(args.marginals, "marginals")
    C = np.asarray(_load_array_doc(args.cost, "cost"), dtype=float)
    problem = build_barycenter_problem(marginals, C)
    out = Path(args.out) if args.out else None
    consts = compute_constants(problem)
    try:
        res = _solve(problem, args)
    except MaxItersExceeded as exc:
        return _partial(exc, out, args.timing)
    bary = barycenter_estimate(problem, res)
    cert = certificate(res)
    doc = result_to_dict(
        problem, res, cert,
        status="ok",
        eps=args.eps,
        barycenter=bary.tolist(),
        L=len(problem.gamma),
        m=problem.m,
        diameter=consts.diameter,
    )
    print(f"cost {res.cost!r}  rc_gamma {consts.rc_gamma!r}  tau {res.tau}")
    print("barycenter", " ".join(f"{w:.6g}" for w in bary))
    if out is not None:
        write_json(_clean(doc), out)
        _write_transcript(res.transcript, out, args.timing)
    return EXIT_OK


def cmd_bench(args) -> int:
    path = Path(args.config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if args.delta is not None:
        doc["delta"] = args.delta
    if args.rule_given:
        doc["rule"] = args.rule
    instances, eps_grid, seeds, delta, rule = bench_mod.load_config(doc, path.parent)
    records, summaries = bench_mod.run_bench(instances, eps_grid, seeds, delta, rule)
    out = Path(args.out) if args.out else path.with_suffix(".csv")
    spath = bench_mod.write_bench(records, summaries, out)
    ok = True
    for s in summaries:
        flag = "PASS" if s.passed else "FAIL"
        ok &= s.passed
        print(f"{flag} {s.instance} eps={s.eps:g} mean_tau={s.mean_tau:.2f} "
              f"bound={s.expectation_bound:.4g} over_prob={s.frac_over_probability_bound:.3f}"
              f" (allowed {s.allowed_fraction:.3f})")
    print(f"records: {out}\nsummary: {spath}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_oracle_check(args) -> int:
    problem = read_problem(args.problem)
    _, opt = lp_solve_small(problem)
    try:
        res = _solve(problem, args)
    except MaxItersExceeded as exc:
        print(f"lp optimum {opt!r}")
        return _partial(exc, Path(args.out) if args.out else None, args.timing, lp_optimum=opt)
    cert = certificate(res)
    gap = res.cost - opt
    ok = gap <= args.eps + 1e-9 and gap <= cert + 1e-9
    print(f"gap {gap!r}  eps {args.eps!r}  certificate {cert!r}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_validate(args) -> int:
    problem = read_problem(args.problem)
    if isinstance(problem, TreeProblem):
        c = compute_constants(problem)
        print(f"OK tree m={problem.m} |Gamma|={len(problem.gamma)} n_max={problem.n_max} "
              f"rc_gamma={c.rc_gamma!r} diameter={c.diameter}")
    else:
        jt = min_fill_decomposition(problem)
        print(f"OK general m={problem.m} |Gamma|={len(problem.gamma)} n_max={problem.n_max} "
              f"width={jt.width} clusters={len(jt.clusters)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motgraph", description="Multi-marginal OT on graph-structured costs.")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(sp, eps_default=0.1):
        sp.add_argument("--eps", type=float, default=eps_default, help="target additive accuracy")
        sp.add_argument("--rule", choices=["random", "cyclic", "greedy"], default="random")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--max-iters", type=int, default=None)
        sp.add_argument("--out", default=None, help="result JSON; the transcript CSV goes next to it")
        sp.add_argument("--timing", action="store_true", help="record wall times in the transcript")

    sp = sub.add_parser("solve", help="epsilon-approximate a problem file")
    sp.add_argument("problem")
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("barycenter", help="fixed-support barycenter of several marginals")
    sp.add_argument("marginals", help="JSON list of marginals (or {'marginals': [...]})")
    sp.add_argument("cost", help="JSON square ground cost (or {'cost': [[...]]})")
    solver_flags(sp)
    sp.set_defaults(func=cmd_barycenter)

    sp = sub.add_parser("bench", help="iteration counts against the iteration-bound envelope")
    sp.add_argument("config")
    sp.add_argument("--out", default=None, help="records CSV; summary goes to <stem>_summary.csv")
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--rule", choices=["random", "cyclic", "greedy"], default=None)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("oracle-check", help="compare the solver against the exact LP")
    sp.add_argument("problem")
    solver_flags(sp)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("validate", help="parse and validate a problem file")
    sp.add_argument("problem")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench":
        args.rule_given = args.rule is not None
    try:
        return args.func(args)
    except (MOTError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
