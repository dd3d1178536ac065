"""Classical allocation baselines rebalanced on a fixed clock."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .data import ReturnsPanel

log = logging.getLogger(__name__)

BENCHMARK_MODELS = ("equal_weights", "risk_parity", "markowitz", "capm", "index")
COVARIANCE_MODELS = ("risk_parity", "markowitz", "capm")
RIDGE = 1e-8


@dataclass(frozen=True)
class BenchmarkConfig:
    model: str
    lookback: int = 252
    rebalance_every: int = 21

    def __post_init__(self):
        if self.model not in BENCHMARK_MODELS:
            raise ValueError(f"benchmark model must be one of {BENCHMARK_MODELS}, got {self.model!r}")
        if self.lookback < 1 or self.rebalance_every < 1:
            raise ValueError("lookback and rebalance_every must be positive")
        if self.model in COVARIANCE_MODELS and self.lookback < 20:
            raise ValueError(f"{self.model} needs a lookback of at least 20 days, got {self.lookback}")


def _regularized(cov: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        np.linalg.cholesky(cov)
        return cov
    except np.linalg.LinAlgError:
        log.info("covariance is singular; adding %.0e to the diagonal", RIDGE)
        return cov + RIDGE * np.eye(len(cov))


def portfolio_sharpe(w, mu, cov) -> float:
    w = np.asarray(w, dtype=float)
    var = float(w @ cov @ w)
    if var <= 0:
        return np.inf if w @ mu > 0 else 0.0
    return float(w @ mu / np.sqrt(var))


def _simplex_qp(cov: np.ndarray, lin_eq: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """min x'Cx subject to lin_eq . x = 1 and x >= 0."""
    res = minimize(
        lambda x: x @ cov @ x,
        x0,
        jac=lambda x: 2.0 * cov @ x,
        method="SLSQP",
        bounds=[(0.0, None)] * len(x0),
        constraints=[{"type": "eq", "fun": lambda x: lin_eq @ x - 1.0, "jac": lambda x: lin_eq}],
        options={"ftol": 1e-16, "maxiter": 1000},
    )
    return np.clip(res.x, 0.0, None)


def min_variance_weights(cov) -> np.ndarray:
    cov = _regularized(cov)
    scale = np.trace(cov) / len(cov) or 1.0
    n = len(cov)
    y = _simplex_qp(cov / scale, np.ones(n), np.full(n, 1.0 / n))
    return y / y.sum()


def max_sharpe_weights(mu, cov) -> np.ndarray:
    """Long-only, fully invested maximum-Sharpe portfolio.

    Solved as min y'Cy s.t. mu'y = 1, y >= 0 and rescaled to sum to 1.
    Falls back to minimum variance when no asset has a positive mean.
    """
    mu = np.asarray(mu, dtype=float)
    cov = _regularized(cov)
    n = len(mu)
    if n == 1:
        return np.ones(1)
    if np.all(mu <= 0):
        log.info("no positive expected return; using the minimum-variance portfolio")
        return min_variance_weights(cov)
    mu_s = mu / np.max(mu)
    cov_s = cov / (np.trace(cov) / n or 1.0)
    best = int(np.argmax(mu_s))
    x0 = np.zeros(n)
    x0[best] = 1.0 / mu_s[best]
    y = _simplex_qp(cov_s, mu_s, x0)
    w = y / y.sum() if y.sum() > 0 else x0 / x0.sum()
    # the QP can stall on flat problems; never return something worse than a single asset
    vertex = np.eye(n)[best]
    if portfolio_sharpe(vertex, mu, cov) > portfolio_sharpe(w, mu, cov):
        w = vertex
    return w


def benchmark_weights(model: str, window: np.ndarray, market: np.ndarray | None = None) -> np.ndarray:
    """Target weights from a trailing window of returns (assets x days)."""
    r = np.asarray(window, dtype=float)
    n = r.shape[0]
    if model in ("equal_weights", "index"):
        return np.full(n, 1.0 / n)
    if r.shape[1] < 2:
        raise ValueError(f"{model} needs at least 2 days of history")
    if model == "risk_parity":
        vol = r.std(axis=1, ddof=1)
        if np.any(vol <= 0):
            log.info("zero-volatility asset in risk parity window; using equal weights")
            return np.full(n, 1.0 / n)
        inv = 1.0 / vol
        return inv / inv.sum()
    cov = np.atleast_2d(np.cov(r, ddof=1))
    if model == "markowitz":
        return max_sharpe_weights(r.mean(axis=1), cov)
    if model == "capm":
        m = r.mean(axis=0) if market is None else np.asarray(market, dtype=float)
        var_m = m.var(ddof=1)
        if var_m <= 0:
            log.info("flat market proxy in CAPM window; using equal weights")
            return np.full(n, 1.0 / n)
        betas = np.array([np.cov(r[i], m, ddof=1)[0, 1] for i in range(n)]) / var_m
        return max_sharpe_weights(betas * m.mean(), cov)
    raise ValueError(f"unknown benchmark model {model!r}")


def run_benchmark(config: BenchmarkConfig, panel: ReturnsPanel,
                  index_returns: np.ndarray | None = None,
                  start: int | None = None) -> tuple[tuple[str, ...], np.ndarray]:
    """Daily returns of a benchmark from day ``start`` (default: the lookback) on.

    Weights are refit every ``rebalance_every`` days on the trailing
    ``lookback`` days and held fixed in between.
    """
    start = config.lookback if start is None else start
    if panel.n_days <= start:
        raise ValueError(f"panel has {panel.n_days} days, not more than the {start}-day warm-up")
    dates = panel.dates[start:]
    if config.model == "index" and index_returns is not None:
        idx = np.asarray(index_returns, dtype=float)
        if idx.shape != (panel.n_days,):
            raise ValueError("index series must have one return per panel day")
        return dates, idx[start:].copy()
    r = panel.returns
    out = np.empty(panel.n_days - start)
    w = None
    for j, t in enumerate(range(start, panel.n_days)):
        if j % config.rebalance_every == 0:
            lo = max(0, t - config.lookback)
            market = None if index_returns is None else np.asarray(index_returns)[lo:t]
            w = benchmark_weights(config.model, r[:, lo:t], market)
        out[j] = w @ r[:, t]
    return dates, out
