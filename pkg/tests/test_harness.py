import csv
import filecmp
import json
import math
from pathlib import Path

import numpy as np
import pytest

from banditnet.config import load_config, parse_config
from banditnet.data import write_panel
from banditnet.harness import (Z95, ExperimentReport, aggregate, ci95, emit_report, removal_list, run_experiment,
                               run_portfolio, run_robustness, run_stock_picking, slug)
from banditnet.metrics import METRIC_NAMES, compute_metrics, total_drift


def config(experiment, path, **extra):
    d = {"experiment": experiment, "n_seeds": 3, "data": {"path": str(path)},
         "benchmarks": {"lookback": 40, "rebalance_every": 10}}
    d.update(extra)
    return parse_config(d)


def synthetic(experiment="stock_picking", n_arms=2, horizon=400, segments=None, **extra):
    segments = segments or [{"start": 0, "probs": [0.9, 0.1]}, {"start": horizon // 2, "probs": [0.1, 0.9]}]
    d = {"experiment": experiment, "n_seeds": 3,
         "data": {"synthetic": {"n_arms": n_arms, "horizon": horizon, "segments": segments}},
         "benchmarks": {"models": []}}
    d.update(extra)
    return parse_config(d)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def same_tree(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(same_tree(a / d, b / d) for d in cmp.common_dirs)


# ---- aggregation

def test_ci95_normal_approximation():
    v = [1.0, 2.0, 4.0, 7.0]
    sd = np.std(v, ddof=1)
    assert ci95(v) == pytest.approx(Z95 * sd / 2)
    assert ci95([3.0]) == 0.0
    row = aggregate("x", "sharpe", v)
    assert row.mean == 3.5 and row.per_seed_values == tuple(v) and row.ci95_halfwidth >= 0


# ---- stock picking

def test_single_arm_has_no_regret():
    cfg = synthetic(n_arms=1, horizon=50, segments=[{"start": 0, "probs": [0.5]}])
    report = run_stock_picking(cfg)
    assert len(report.runs) == 7 * 3
    assert all(r.regret[-1] == 0 for r in report.runs)


def test_adts_beats_classical_on_swap():
    cfg = synthetic(horizon=2000, n_seeds=30, policies=[
        {"name": "ADTS", "type": "adts", "gamma": 0.9, "aggregation": "mean", "window": 100},
        {"name": "TS", "type": "classical_ts"}])
    report = run_stock_picking(cfg)
    regret = {r.name: r.mean for r in report.aggregates if r.metric == "cumulative_regret"}
    assert regret["ADTS"] < regret["TS"]


def test_stock_picking_on_prices(toy_csv):
    report = run_stock_picking(config("stock_picking", toy_csv))
    names = {r.name for r in report.runs}
    assert len(names) == 7
    for run in report.runs:
        assert np.all(np.diff(run.regret) >= 0)
        assert run.weights.sum(axis=1).tolist() == [1.0] * len(run.steps)
        assert set(run.chosen) <= set(report.tickers)
    metrics = {(a.name, a.metric) for a in report.aggregates}
    assert ("index", "sharpe") in metrics
    assert all(("UCB1", m) in metrics for m in ("cumulative_regret", *METRIC_NAMES))


def test_stock_picking_return_is_chosen_stock(toy_csv, toy_panel):
    report = run_stock_picking(config("stock_picking", toy_csv, n_seeds=1))
    run = report.runs[0]
    for t, ticker, r in zip(run.steps, run.chosen, run.returns):
        assert r == toy_panel.returns[toy_panel.index_of(ticker), t]


# ---- portfolio

def test_all_five_networks_on_toy_panel(toy_csv):
    report = run_portfolio(config("portfolio", toy_csv, n_seeds=2))
    assert len({r.name for r in report.runs}) == 5
    for run in report.runs:
        assert np.all(np.abs(run.weights.sum(axis=1) - 1.0) <= 1e-9)
        assert np.all(run.weights >= 0)
    assert any("k reduced from 15 to 6" in n for n in report.notes)


def test_portfolio_returns_follow_weights(toy_csv, toy_panel):
    report = run_portfolio(config("portfolio", toy_csv, n_seeds=1))
    for run in report.runs:
        expected = np.einsum("tk,kt->t", run.weights, toy_panel.returns[:, run.steps])
        np.testing.assert_allclose(run.returns, expected, atol=1e-15)


def test_equal_weights_benchmark(toy_csv, toy_panel):
    cfg = config("portfolio", toy_csv, n_seeds=1, benchmarks={"models": ["equal_weights"], "lookback": 40},
                 networks=[{"name": "n", "architecture": "two_layer_adts", "k": 2}])
    report = run_portfolio(cfg)
    steps, dates, series = report.benchmarks["equal_weights"]
    np.testing.assert_allclose(series, toy_panel.returns[:, 40:].mean(axis=0), atol=1e-15)
    assert steps[0] == 40 and dates[0] == toy_panel.dates[40]


# ---- robustness

def rob_config(path, **extra):
    return config("robustness", path, n_seeds=2, robustness={"max_m": 2, "removal_list": ["S03", "S01"]},
                  networks=[{"name": "TL", "architecture": "two_layer_adts", "k": 2},
                            {"name": "RC", "architecture": "ranker_cadts", "k": 2}], **extra)


def test_m0_equals_plain_portfolio(toy_csv):
    cfg = rob_config(toy_csv)
    rob = run_robustness(cfg)
    plain = run_portfolio(cfg)
    assert rob.sections["M0"].aggregates == plain.aggregates
    assert rob.aggregates == plain.aggregates
    assert rob.sections["M2"].tickers == ("S00", "S02", "S04", "S05")


def test_external_index_has_no_drift(tmp_path, toy_panel):
    write_panel(toy_panel, tmp_path / "p.csv")
    cfg = rob_config(tmp_path / "p.csv", data={"path": str(tmp_path / "p.csv"), "index_ticker": "S05"},
                     benchmarks={"models": ["index", "equal_weights"], "lookback": 40})
    rob = run_robustness(cfg)
    idx = [[a for a in s.aggregates if a.name == "index"] for s in rob.sections.values()]
    assert all(rows == idx[0] for rows in idx)
    drift = [d for d in rob.drift if d["name"] == "index"]
    assert drift and all(d["total_drift"] == 0.0 for d in drift)
    assert "S05" not in rob.tickers


def test_drift_rows(toy_csv):
    rob = run_robustness(rob_config(toy_csv))
    for d in rob.drift:
        if d["first"] != 0:
            assert d["total_drift"] == (d["first"] - d["last"]) / d["first"]
    assert {d["metric"] for d in rob.drift} == {"total_return", "sharpe", "max_drawdown"}
    assert {s["M"] for s in rob.sweep} == {0, 1, 2}


def test_drift_formula_rounding():
    assert round(100 * total_drift(4.92, 1.16), 1) == 76.4


def test_removal_list_defaults(toy_csv, toy_panel):
    cfg = config("robustness", toy_csv, robustness={"max_m": 3})
    ranked = sorted(toy_panel.tickers, key=lambda t: -np.prod(1 + toy_panel.returns[toy_panel.index_of(t)]))
    assert removal_list(cfg, toy_panel) == ranked[:3]
    bad = config("robustness", toy_csv, robustness={"max_m": 1, "removal_list": ["NOPE"]})
    with pytest.raises(KeyError):
        run_robustness(bad)


# ---- report files

def test_report_layout(tmp_path, toy_csv):
    report = run_portfolio(config("portfolio", toy_csv, n_seeds=2))
    out = emit_report(report, tmp_path / "out")
    names = ["SW UCB | CADTS (k=4)", "ADTS | CADTS (k=4)", "Two Layer ADTS (k=4)",
             "Two Layer ADTS (k=10)", "Two Layer ADTS (k=15)"]
    for name in names:
        for seed in (0, 1):
            ts = read_csv(out / "timeseries" / f"{slug(name)}_{seed}.csv")
            assert list(ts[0]) == ["step", "date", "chosen", "reward", "regret", "wealth"]
            w = read_csv(out / "weights" / f"{slug(name)}_{seed}.csv")
            assert list(w[0])[2:] == list(report.tickers)
    curves = read_csv(out / "curves" / "wealth.csv")
    assert list(curves[0]) == ["name", "step", "date", "mean", "ci95_halfwidth"]
    assert (out / "curves" / "regret.csv").exists() and (out / "benchmarks.csv").exists()
    resolved = json.loads((out / "config.resolved.json").read_text(encoding="utf-8"))
    assert resolved["n_seeds"] == 2 and len(resolved["networks"]) == 5


def test_summary_recomputes_from_seed_files(tmp_path, toy_csv):
    cfg = config("stock_picking", toy_csv)
    out = emit_report(run_stock_picking(cfg), tmp_path / "out")
    rows = read_csv(out / "summary.csv")
    for name in cfg.policies:
        per_seed = []
        for seed in range(3):
            ts = read_csv(out / "timeseries" / f"{slug(name)}_{seed}.csv")
            r = np.array([float(x["reward"]) for x in ts])
            m = compute_metrics(r).as_dict()
            m["cumulative_regret"] = float(ts[-1]["regret"])
            assert float(ts[-1]["wealth"]) == pytest.approx(1 + m["total_return"], rel=1e-12)
            per_seed.append(m)
        for row in (x for x in rows if x["name"] == name):
            vals = [p[row["metric"]] for p in per_seed]
            assert abs(float(row["mean"]) - np.mean(vals)) <= 1e-9
            assert abs(float(row["ci95_halfwidth"]) - ci95(vals)) <= 1e-9


def test_regret_curves_non_decreasing(tmp_path, toy_csv):
    out = emit_report(run_stock_picking(config("stock_picking", toy_csv)), tmp_path / "out")
    for f in (out / "timeseries").iterdir():
        regret = [float(r["regret"]) for r in read_csv(f)]
        assert all(b >= a for a, b in zip(regret, regret[1:]))


def test_empty_policy_list(tmp_path, toy_csv):
    report = run_stock_picking(config("stock_picking", toy_csv, policies=[], benchmarks={"models": []}))
    out = emit_report(report, tmp_path / "out")
    assert (out / "summary.csv").read_text(encoding="utf-8") == "name,metric,mean,ci95_halfwidth,per_seed_values\n"


def test_rerun_same_dir_is_identical(tmp_path, toy_csv):
    cfg = config("stock_picking", toy_csv)
    emit_report(run_experiment(cfg), tmp_path / "a")
    first = {p: p.read_bytes() for p in (tmp_path / "a").rglob("*") if p.is_file()}
    emit_report(run_experiment(cfg), tmp_path / "a")
    assert first == {p: p.read_bytes() for p in (tmp_path / "a").rglob("*") if p.is_file()}


def test_seed_independence(tmp_path, toy_csv):
    batch = run_portfolio(config("portfolio", toy_csv, n_seeds=3, seed_base=5))
    alone = run_portfolio(config("portfolio", toy_csv, n_seeds=1, seed_base=6))
    for run in alone.runs:
        twin = next(r for r in batch.runs if r.name == run.name and r.seed == 6)
        assert np.array_equal(twin.weights, run.weights) and np.array_equal(twin.returns, run.returns)


def test_workers_do_not_change_output(tmp_path, toy_csv):
    emit_report(run_experiment(config("stock_picking", toy_csv)), tmp_path / "one")
    emit_report(run_experiment(config("stock_picking", toy_csv, workers=2)), tmp_path / "two")
    (tmp_path / "two" / "config.resolved.json").unlink()
    (tmp_path / "one" / "config.resolved.json").unlink()
    assert same_tree(tmp_path / "one", tmp_path / "two")


def test_resolved_config_reproduces_run(tmp_path, toy_csv):
    cfg = config("portfolio", toy_csv, n_seeds=2)
    emit_report(run_experiment(cfg), tmp_path / "a")
    again = load_config(tmp_path / "a" / "config.resolved.json")
    emit_report(run_experiment(again), tmp_path / "b")
    assert same_tree(tmp_path / "a", tmp_path / "b")


def test_drift_applied_from_config(toy_csv, toy_panel):
    cfg = config("stock_picking", toy_csv, n_seeds=1, drift={"target": "S00", "cut_date": toy_panel.dates[80]})
    report = run_stock_picking(cfg)
    assert any(n.startswith("drift applied") for n in report.notes)


def test_write_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(ExperimentReport("portfolio", {}, ()), blocker / "sub")


def test_slug():
    assert slug("SW UCB | CADTS (k=4)") == "SW_UCB_CADTS_k=4"
    assert not math.isnan(len(slug("")))
