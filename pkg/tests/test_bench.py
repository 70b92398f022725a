import csv
import json
import math

import pytest

from motgraph.bench import (
    BenchConfigError,
    BenchRecord,
    load_config,
    run_bench,
    summarize,
    summary_path,
    worker_count,
    write_bench,
)
from motgraph.cli import main

SMALL = {
    "instances": [{"id": "star3", "family": "star", "size": 3, "n": 4, "seed": 1},
                  {"id": "path4", "family": "path", "size": 4, "n": 3, "seed": 2}],
    "eps": [0.5, 0.25],
    "seeds": 4,
}


def test_bound_quadruples_when_eps_halves():
    inst, eps, seeds, delta, rule = load_config(SMALL)
    recs, summ = run_bench(inst, eps, seeds[:1], delta, rule, workers=1)
    by = {(r.instance, r.eps): r for r in recs}
    for name, _ in inst:
        assert by[(name, 0.25)].expectation_bound == 4 * by[(name, 0.5)].expectation_bound
        assert by[(name, 0.25)].probability_bound == 4 * by[(name, 0.5)].probability_bound
        r = by[(name, 0.5)]
        assert r.probability_bound == pytest.approx(6 * math.log(10) * r.expectation_bound)


def test_parallel_matches_serial():
    inst, eps, seeds, delta, rule = load_config(SMALL)
    a, _ = run_bench(inst, eps, seeds, delta, rule, workers=1)
    b, _ = run_bench(inst, eps, seeds, delta, rule, workers=2)
    key = lambda r: (r.instance, r.eps, r.seed, r.tau, r.messages)
    assert [key(r) for r in a] == [key(r) for r in b]
    assert [(r.instance, r.eps, r.seed) for r in a] == [(n, e, s) for n, _ in inst for e in eps for s in seeds]


def test_summary_logic():
    def rec(tau, seed):
        return BenchRecord("x", seed, "random", 0.5, 0.1, 0.1, tau, 10.0, 20.0, 0.0, 0, 2, 2.0)

    ok = summarize([rec(t, s) for s, t in enumerate([5, 8, 12, 9])], 0.1)[0]
    assert ok.mean_tau == 8.5 and ok.max_tau == 12 and ok.passed
    assert ok.allowed_fraction == pytest.approx(0.1 + 3 * math.sqrt(0.09 / 4))
    bad = summarize([rec(t, s) for s, t in enumerate([15, 8, 12, 9])], 0.1)[0]
    assert bad.mean_tau == 11 and not bad.passed


def test_worker_count(monkeypatch):
    monkeypatch.setenv("MOTGRAPH_THREADS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("MOTGRAPH_THREADS", "1")
    assert worker_count(10) == 1


def test_config_errors():
    with pytest.raises(BenchConfigError):
        load_config({"eps": [1.0]})
    with pytest.raises(BenchConfigError):
        load_config({**SMALL, "delta": 1.5})


def test_write_and_cli(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MOTGRAPH_THREADS", "1")
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps(SMALL))
    out = tmp_path / "records.csv"
    assert main(["bench", str(cfg), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2 * 2 * 4
    summary = list(csv.DictReader(open(summary_path(out))))
    assert len(summary) == 4 and all(r["passed"] == "True" for r in summary)
    assert "PASS star3" in capsys.readouterr().out


def test_file_instance(tmp_path):
    from motgraph.generators import random_tree_problem
    from motgraph.io import write_problem
    import numpy as np

    write_problem(random_tree_problem(np.random.default_rng(0), "path", 3), tmp_path / "p.json")
    inst, *_ = load_config({"instances": [{"id": "f", "file": "p.json"}], "eps": [1.0]}, tmp_path)
    assert inst[0][0] == "f" and inst[0][1].m == 3
    recs, summ = run_bench(inst, [1.0], [0, 1], workers=1)
    spath = write_bench(recs, summ, tmp_path / "o.csv")
    assert spath.name == "o_summary.csv"
