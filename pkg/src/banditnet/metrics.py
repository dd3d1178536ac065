"""Windowed reward functions fed to the bandits and portfolio evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

REWARD_KINDS = ("mean_return", "sharpe", "cumulative_return")
TRADING_DAYS = 252


@dataclass(frozen=True)
class RewardFnSpec:
    """Financial function over the trailing ``window`` returns (None = whole history)."""

    kind: str = "mean_return"
    window: int | None = 100

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValueError(f"reward kind must be one of {REWARD_KINDS}, got {self.kind!r}")
        if self.window is not None:
            if self.window < 1:
                raise ValueError(f"reward window must be >= 1, got {self.window}")
            if self.kind == "sharpe" and self.window < 2:
                raise ValueError("a Sharpe reward needs a window of at least 2")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "window": "inf" if self.window is None else self.window}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardFnSpec":
        unknown = set(d) - {"kind", "window"}
        if unknown:
            raise ValueError(f"unknown reward keys: {sorted(unknown)}")
        window = d.get("window", 100)
        if window in ("inf", "infinite", None):
            window = None
        return cls(kind=d.get("kind", "mean_return"), window=window)


def _is_constant(x: np.ndarray, axis=None) -> np.ndarray:
    return np.ptp(x, axis=axis) == 0


def reward_value(spec: RewardFnSpec, series) -> float:
    """Reward of one return series, evaluated over its trailing window.

    Shorter histories use everything available. A Sharpe reward on a series
    with no variation (or a single observation) is 0.
    """
    r = np.asarray(series, dtype=float)
    if r.size == 0:
        raise ValueError("reward needs at least one observation")
    if spec.window is not None:
        r = r[-spec.window:]
    if spec.kind == "mean_return":
        return float(np.mean(r))
    if spec.kind == "cumulative_return":
        return float(np.prod(1.0 + r) - 1.0)
    if r.size < 2 or _is_constant(r):
        return 0.0
    return float(np.mean(r) / np.std(r, ddof=1))


def reward_matrix(spec: RewardFnSpec, returns: np.ndarray) -> tuple[np.ndarray, int]:
    """Reward of every asset at every day using returns up to and including that day.

    ``returns`` is assets x days. Also returns how many (asset, day) cells hit
    the zero-variance Sharpe convention.
    """
    r = np.asarray(returns, dtype=float)
    n_assets, n_days = r.shape
    out = np.empty_like(r)
    degenerate = 0
    for t in range(n_days):
        lo = 0 if spec.window is None else max(0, t - spec.window + 1)
        win = r[:, lo:t + 1]
        if spec.kind == "mean_return":
            out[:, t] = win.mean(axis=1)
        elif spec.kind == "cumulative_return":
            out[:, t] = np.prod(1.0 + win, axis=1) - 1.0
        elif win.shape[1] < 2:
            out[:, t] = 0.0
            degenerate += n_assets
        else:
            flat = _is_constant(win, axis=1)
            sd = np.std(win, axis=1, ddof=1)
            sd[flat] = 1.0
            vals = win.mean(axis=1) / sd
            vals[flat] = 0.0
            out[:, t] = vals
            degenerate += int(flat.sum())
    return out, degenerate


def portfolio_return(weights, asset_returns, tol: float = 1e-9) -> float:
    w = np.asarray(weights, dtype=float)
    r = np.asarray(asset_returns, dtype=float)
    if w.shape != r.shape:
        raise ValueError(f"weights shape {w.shape} does not match returns shape {r.shape}")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return float(w @ r)


@dataclass(frozen=True)
class MetricsReport:
    total_return: float
    sharpe: float
    sortino: float
    max_drawdown: float
    win_rate: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


METRIC_NAMES = ("total_return", "sharpe", "sortino", "max_drawdown", "win_rate")


def wealth_curve(returns) -> np.ndarray:
    """Compounded wealth after each day, starting from 1."""
    return np.cumprod(1.0 + np.asarray(returns, dtype=float))


def max_drawdown(returns) -> float:
    wealth = np.concatenate([[1.0], wealth_curve(returns)])
    peaks = np.maximum.accumulate(wealth)
    return float(np.max(1.0 - wealth / peaks))


def sharpe_ratio(returns, periods: int = TRADING_DAYS) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 2 or _is_constant(r):
        return 0.0
    return float(r.mean() / r.std(ddof=1) * math.sqrt(periods))


def sortino_ratio(returns, periods: int = TRADING_DAYS) -> float:
    """Mean over the root-mean-square of shortfalls below 0 (all days in the denominator)."""
    r = np.asarray(returns, dtype=float)
    downside = math.sqrt(np.mean(np.minimum(r, 0.0) ** 2))
    if downside == 0.0:
        return 0.0
    return float(r.mean() / downside * math.sqrt(periods))


def compute_metrics(daily_returns, periods: int = TRADING_DAYS) -> MetricsReport:
    r = np.asarray(daily_returns, dtype=float)
    if r.size == 0:
        raise ValueError("metrics need a non-empty return series")
    return MetricsReport(
        total_return=float(np.prod(1.0 + r) - 1.0),
        sharpe=sharpe_ratio(r, periods),
        sortino=sortino_ratio(r, periods),
        max_drawdown=max_drawdown(r),
        win_rate=float(np.mean(r > 0)),
    )


def total_drift(first: float, last: float) -> float:
    """Relative loss of a metric from the first to the last robustness step."""
    if first == 0:
        return math.nan
    return (first - last) / first
