"""Experiment orchestration: seeded replications, aggregates and report files."""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .benchmarks import run_benchmark
from .config import ExperimentConfig
from .core import make_rng, play
from .data import (ROBUSTNESS_REMOVALS, ReturnsPanel, apply_drift, generate_synthetic, load_prices,
                   rank_by_cumulative_return, remove_top, resolve_tickers)
from .metrics import METRIC_NAMES, RewardFnSpec, compute_metrics, portfolio_return, reward_matrix, total_drift
from .networks import NetworkConfig, make_network
from .policies import PolicyConfig, make_policy

log = logging.getLogger(__name__)

Z95 = 1.96
# first bandit round; reward functions need two observations
FIRST_STEP = 1
DRIFT_METRICS = ("total_return", "sharpe", "max_drawdown")


@dataclass
class RunResult:
    """One (strategy, seed) replication, one entry per traded day."""

    name: str
    seed: int
    steps: np.ndarray
    dates: tuple[str, ...]
    chosen: list[str]
    returns: np.ndarray
    binary: np.ndarray
    weights: np.ndarray

    @property
    def regret(self) -> np.ndarray:
        return np.cumsum(1.0 - self.binary)

    @property
    def wealth(self) -> np.ndarray:
        return np.cumprod(1.0 + self.returns)


@dataclass(frozen=True)
class AggregateRow:
    name: str
    metric: str
    mean: float
    ci95_halfwidth: float
    per_seed_values: tuple[float, ...]


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    tickers: tuple[str, ...]
    runs: list[RunResult] = field(default_factory=list)
    # model -> (steps, dates, daily returns)
    benchmarks: dict[str, tuple[np.ndarray, tuple[str, ...], np.ndarray]] = field(default_factory=dict)
    aggregates: list[AggregateRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    sections: dict[str, "ExperimentReport"] = field(default_factory=dict)
    sweep: list[dict] = field(default_factory=list)
    drift: list[dict] = field(default_factory=list)


def ci95(values: Sequence[float]) -> float:
    """Normal-approximation 95% half-width; 0 for a single value."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(Z95 * v.std(ddof=1) / math.sqrt(v.size))


def aggregate(name: str, metric: str, values: Sequence[float]) -> AggregateRow:
    v = tuple(float(x) for x in values)
    return AggregateRow(name, metric, float(np.mean(v)), ci95(v), v)


# ---------------------------------------------------------------- data

def load_environment(config: ExperimentConfig) -> tuple[ReturnsPanel, np.ndarray | None, list[str]]:
    """Universe panel (drift applied) and the optional external index series."""
    notes = []
    data = config.data
    if data.synthetic is not None:
        raw = generate_synthetic(data.synthetic, data.synthetic_seed)
        panel = ReturnsPanel(raw.tickers, raw.dates, raw.returns * data.return_scale)
    else:
        panel = load_prices(data.resolved_path(), data.format)
    index = None
    if data.index_ticker is not None:
        index = panel.returns[panel.index_of(data.index_ticker)].copy()
        panel = panel.drop([data.index_ticker])
    if config.drift is not None:
        panel = apply_drift(panel, config.drift)
        notes.append(f"drift applied: {config.drift}")
    return panel, index, notes


def _reward_cache(panel: ReturnsPanel, specs: Sequence[RewardFnSpec]) -> tuple[dict, int]:
    cache, degenerate = {}, 0
    for spec in specs:
        if spec not in cache:
            cache[spec], n = reward_matrix(spec, panel.returns)
            degenerate += n
    return cache, degenerate


# ---------------------------------------------------------------- replications

def simulate_policy(name: str, cfg: PolicyConfig, seed: int, fn: np.ndarray, panel: ReturnsPanel) -> RunResult:
    """Stock picking: one stock per day, binarized against the best reward of the day."""
    policy = make_policy(cfg, panel.n_assets, make_rng(seed))
    steps = np.arange(FIRST_STEP, panel.n_days)
    chosen = np.empty(len(steps), dtype=int)
    binary = np.empty(len(steps))
    for j, t in enumerate(steps):
        rec = play(policy, fn[:, t], int(t))
        chosen[j] = rec.chosen
        binary[j] = rec.binary_reward
    returns = panel.returns[chosen, steps]
    weights = np.zeros((len(steps), panel.n_assets))
    weights[np.arange(len(steps)), chosen] = 1.0
    return RunResult(name, seed, steps, panel.dates[FIRST_STEP:], [panel.tickers[i] for i in chosen],
                     returns, binary, weights)


def simulate_network(name: str, cfg: NetworkConfig, seed: int, fn1: np.ndarray, fn2: np.ndarray,
                     panel: ReturnsPanel) -> RunResult:
    """Portfolio: the network allocates before seeing the day, then learns from it."""
    net = make_network(cfg, panel.n_assets, seed)
    steps = np.arange(FIRST_STEP, panel.n_days)
    weights = np.empty((len(steps), panel.n_assets))
    returns = np.empty(len(steps))
    binary = np.empty(len(steps))
    chosen = []
    for j, t in enumerate(steps):
        dec = net.step(fn1[:, t], fn2[:, t])
        weights[j] = dec.weights
        returns[j] = portfolio_return(dec.weights, panel.returns[:, t])
        binary[j] = dec.layer2_reward
        chosen.append(";".join(panel.tickers[i] for i in np.flatnonzero(dec.weights)))
    return RunResult(name, seed, steps, panel.dates[FIRST_STEP:], chosen, returns, binary, weights)


def _run_task(task) -> RunResult:
    fn, args = task
    return fn(*args)


def _run_all(tasks: list, workers: int) -> list[RunResult]:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _seeds(config: ExperimentConfig) -> list[int]:
    return [config.seed_base + i for i in range(config.n_seeds)]


def _summaries(runs: list[RunResult], names: Sequence[str], periods: int) -> list[AggregateRow]:
    rows = []
    for name in names:
        mine = [r for r in runs if r.name == name]
        rows.append(aggregate(name, "cumulative_regret", [r.regret[-1] if len(r.regret) else 0.0 for r in mine]))
        metrics = [compute_metrics(r.returns, periods).as_dict() for r in mine]
        for m in METRIC_NAMES:
            rows.append(aggregate(name, m, [x[m] for x in metrics]))
    return rows


def _benchmarks(config: ExperimentConfig, panel: ReturnsPanel, index: np.ndarray | None,
                report: ExperimentReport) -> None:
    for b in config.benchmarks:
        if panel.n_days <= b.lookback:
            report.notes.append(f"benchmark {b.model} skipped: {panel.n_days} days do not exceed "
                                f"the {b.lookback}-day lookback")
            continue
        dates, series = run_benchmark(b, panel, index)
        steps = np.arange(panel.n_days - len(series), panel.n_days)
        report.benchmarks[b.model] = (steps, dates, series)
        metrics = compute_metrics(series, config.periods_per_year).as_dict()
        for m in METRIC_NAMES:
            report.aggregates.append(aggregate(b.model, m, [metrics[m]]))


def _effective_network(name: str, cfg: NetworkConfig, n_assets: int, notes: list[str]) -> NetworkConfig:
    k = cfg.k
    if cfg.architecture == "ranker_cadts" and k >= n_assets:
        k = n_assets - 1
    elif cfg.architecture == "two_layer_adts" and k > n_assets:
        k = n_assets
    if k < 1:
        raise ValueError(f"{name}: universe of {n_assets} assets is too small for this network")
    if k != cfg.k:
        notes.append(f"{name}: k reduced from {cfg.k} to {k} for a {n_assets}-asset universe")
        cfg = replace(cfg, k=k)
    return cfg


# ---------------------------------------------------------------- experiments

def run_stock_picking(config: ExperimentConfig, panel: ReturnsPanel | None = None,
                      index: np.ndarray | None = None) -> ExperimentReport:
    notes: list[str] = []
    if panel is None:
        panel, index, notes = load_environment(config)
    report = ExperimentReport("stock_picking", config.to_dict(), panel.tickers, notes=notes)
    cache, degenerate = _reward_cache(panel, [config.reward])
    if degenerate:
        report.notes.append(f"{degenerate} zero-variance Sharpe reward evaluations set to 0")
    fn = cache[config.reward]
    tasks = [(simulate_policy, (name, cfg, seed, fn, panel))
             for name, cfg in config.policies.items() for seed in _seeds(config)]
    report.runs = _run_all(tasks, config.workers)
    report.aggregates = _summaries(report.runs, list(config.policies), config.periods_per_year)
    _benchmarks(config, panel, index, report)
    return report


def run_portfolio(config: ExperimentConfig, panel: ReturnsPanel | None = None,
                  index: np.ndarray | None = None) -> ExperimentReport:
    notes: list[str] = []
    if panel is None:
        panel, index, notes = load_environment(config)
    report = ExperimentReport("portfolio", config.to_dict(), panel.tickers, notes=notes)
    nets = {name: _effective_network(name, cfg, panel.n_assets, report.notes)
            for name, cfg in config.networks.items()}
    specs = [s for cfg in nets.values() for s in (cfg.layer1_reward, cfg.layer2_reward)]
    cache, degenerate = _reward_cache(panel, specs)
    if degenerate:
        report.notes.append(f"{degenerate} zero-variance Sharpe reward evaluations set to 0")
    tasks = [(simulate_network, (name, cfg, seed, cache[cfg.layer1_reward], cache[cfg.layer2_reward], panel))
             for name, cfg in nets.items() for seed in _seeds(config)]
    report.runs = _run_all(tasks, config.workers)
    report.aggregates = _summaries(report.runs, list(nets), config.periods_per_year)
    _benchmarks(config, panel, index, report)
    return report


def removal_list(config: ExperimentConfig, panel: ReturnsPanel) -> list[str]:
    """First ``max_m`` tickers to strip, best first.

    Uses the configured list, else the default list when all of it is in the
    panel, else the panel ranked by cumulative return.
    """
    m = config.robustness.max_m
    if config.robustness.removal_list is not None:
        names = resolve_tickers(panel, config.robustness.removal_list)
    else:
        try:
            names = resolve_tickers(panel, ROBUSTNESS_REMOVALS)
        except KeyError:
            names = rank_by_cumulative_return(panel)
    if m > len(names):
        raise ValueError(f"max_m={m} exceeds the {len(names)} removable tickers")
    return names[:m]


def run_robustness(config: ExperimentConfig, panel: ReturnsPanel | None = None,
                   index: np.ndarray | None = None) -> ExperimentReport:
    notes: list[str] = []
    if panel is None:
        panel, index, notes = load_environment(config)
    removals = removal_list(config, panel)
    if config.robustness.max_m >= panel.n_assets:
        raise ValueError(f"removing {config.robustness.max_m} of {panel.n_assets} assets leaves nothing to trade")
    report = ExperimentReport("robustness", config.to_dict(), panel.tickers, notes=notes)
    report.notes.append("removal order: " + ", ".join(removals[:config.robustness.max_m]))
    names: list[str] = []
    for m in range(config.robustness.max_m + 1):
        sub = remove_top(panel, removals, m)
        section = run_portfolio(config, sub, index)
        report.sections[f"M{m}"] = section
        report.notes.extend(f"M={m}: {n}" for n in section.notes)
        for row in section.aggregates:
            if row.metric in DRIFT_METRICS or row.metric == "cumulative_regret":
                report.sweep.append({"name": row.name, "metric": row.metric, "M": m,
                                     "mean": row.mean, "ci95_halfwidth": row.ci95_halfwidth})
            if row.name not in names:
                names.append(row.name)
    first = report.sections["M0"].aggregates
    last = report.sections[f"M{config.robustness.max_m}"].aggregates
    for name in names:
        for metric in DRIFT_METRICS:
            a = next((r.mean for r in first if r.name == name and r.metric == metric), None)
            b = next((r.mean for r in last if r.name == name and r.metric == metric), None)
            if a is None or b is None:
                continue
            report.drift.append({"name": name, "metric": metric, "first": a, "last": b,
                                 "total_drift": total_drift(a, b)})
    report.aggregates = list(first)
    return report


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "stock_picking": run_stock_picking,
    "portfolio": run_portfolio,
    "robustness": run_robustness,
}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[config.experiment](config)


# ---------------------------------------------------------------- report files

def slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=-]+", "_", name).strip("_") or "run"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc}") from exc


def _curve_rows(report: ExperimentReport, attr: str):
    names = list(dict.fromkeys(r.name for r in report.runs))
    for name in names:
        mine = [r for r in report.runs if r.name == name]
        stack = np.vstack([getattr(r, attr) for r in mine]) if mine[0].steps.size else np.empty((len(mine), 0))
        for j in range(stack.shape[1]):
            col = stack[:, j]
            yield (name, int(mine[0].steps[j]), mine[0].dates[j], float(col.mean()), ci95(col))
    if attr == "wealth":
        for model, (steps, dates, series) in report.benchmarks.items():
            for s, d, v in zip(steps, dates, np.cumprod(1.0 + series)):
                yield (model, int(s), d, float(v), 0.0)


def emit_report(report: ExperimentReport, out_dir) -> Path:
    """Write summary, per-seed series, weights, resolved config and plot-ready curves."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "summary.csv", ["name", "metric", "mean", "ci95_halfwidth", "per_seed_values"],
               ((a.name, a.metric, a.mean, a.ci95_halfwidth, ";".join(_fmt(v) for v in a.per_seed_values))
                for a in report.aggregates))
    for r in report.runs:
        stem = f"{slug(r.name)}_{r.seed}.csv"
        regret, wealth = r.regret, r.wealth
        _write_csv(out / "timeseries" / stem, ["step", "date", "chosen", "reward", "regret", "wealth"],
                   ((int(s), d, c, x, g, w) for s, d, c, x, g, w
                    in zip(r.steps, r.dates, r.chosen, r.returns, regret, wealth)))
        _write_csv(out / "weights" / stem, ["step", "date", *report.tickers],
                   ((int(s), d, *row) for s, d, row in zip(r.steps, r.dates, r.weights)))
    if report.runs:
        _write_csv(out / "curves" / "regret.csv", ["name", "step", "date", "mean", "ci95_halfwidth"],
                   _curve_rows(report, "regret"))
        _write_csv(out / "curves" / "wealth.csv", ["name", "step", "date", "mean", "ci95_halfwidth"],
                   _curve_rows(report, "wealth"))
    if report.benchmarks:
        models = list(report.benchmarks)
        steps, dates, _ = report.benchmarks[models[0]]
        _write_csv(out / "benchmarks.csv", ["step", "date", *models],
                   ((int(s), d, *(report.benchmarks[m][2][j] for m in models))
                    for j, (s, d) in enumerate(zip(steps, dates))))
    for key, section in report.sections.items():
        emit_report(section, out / key)
    if report.sweep:
        _write_csv(out / "robustness.csv", ["name", "metric", "M", "mean", "ci95_halfwidth"],
                   ((s["name"], s["metric"], s["M"], s["mean"], s["ci95_halfwidth"]) for s in report.sweep))
        _write_csv(out / "curves" / "robustness.csv", ["name", "metric", "M", "mean", "ci95_halfwidth"],
                   ((s["name"], s["metric"], s["M"], s["mean"], s["ci95_halfwidth"]) for s in report.sweep))
    if report.drift:
        _write_csv(out / "drift.csv", ["name", "metric", "M_first", "M_last", "total_drift"],
                   ((s["name"], s["metric"], s["first"], s["last"], s["total_drift"]) for s in report.drift))
    if report.notes:
        (out / "notes.txt").write_text("".join(n + "\n" for n in report.notes), encoding="utf-8")
    (out / "config.resolved.json").write_text(json.dumps(report.config, indent=2) + "\n", encoding="utf-8")
    return out
