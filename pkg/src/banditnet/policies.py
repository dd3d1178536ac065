"""Single-arm policies: ADTS and the Thompson-sampling / UCB baselines."""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from .core import BetaTrace, Policy, WindowTrace, check_gamma

AGGREGATIONS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "min": np.minimum,
    "mean": lambda a, b: (a + b) / 2.0,
    "max": np.maximum,
}


def aggregate(theta: np.ndarray, theta_short: np.ndarray, how: str) -> np.ndarray:
    """Combine historic and short-term draws arm by arm."""
    try:
        fn = AGGREGATIONS[how]
    except KeyError:
        raise ValueError(f"aggregation must be one of {sorted(AGGREGATIONS)}, got {how!r}") from None
    return fn(np.asarray(theta, dtype=float), np.asarray(theta_short, dtype=float))


def select_from_draws(theta, theta_short, how: str) -> int:
    """Argmax of the aggregated scores, lowest index on ties."""
    return int(np.argmax(aggregate(theta, theta_short, how)))


class ThompsonSampling(Policy):
    """Beta-Bernoulli Thompson sampling with optional discounting.

    With ``discount_all=False`` and ``gamma=1`` this is classical TS. With
    ``discount_all=True`` every arm's counts decay by ``gamma`` each round
    before the chosen arm is credited (discounted TS).
    """

    name = "classical_ts"

    def __init__(self, n_arms: int, rng: np.random.Generator, gamma: float = 1.0,
                 discount_all: bool = False, smoothing: float = 1.0):
        super().__init__(n_arms)
        self.rng = rng
        self.gamma = check_gamma(gamma)
        self.discount_all = discount_all
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.smoothing = float(smoothing)
        self.alpha = np.zeros(n_arms)
        self.beta = np.zeros(n_arms)

    def scores(self) -> np.ndarray:
        return self.rng.beta(self.alpha + self.smoothing, self.beta + self.smoothing)

    def _update(self, arm: int, x: int) -> None:
        if self.discount_all:
            self.alpha *= self.gamma
            self.beta *= self.gamma
            self.alpha[arm] += x
            self.beta[arm] += 1 - x
        else:
            self.alpha[arm] = self.gamma * self.alpha[arm] + x
            self.beta[arm] = self.gamma * self.beta[arm] + (1 - x)

    def trace(self, arm: int) -> BetaTrace:
        return BetaTrace(float(self.alpha[arm]), float(self.beta[arm]))


class ADTS(Policy):
    """Adaptive discounted Thompson sampling.

    Each arm keeps a discounted historic Beta trace and a sliding window of
    its own last ``window`` binary rewards. Both are sampled (with the +1
    prior), combined by ``aggregation`` and the best score is played. Only
    the played arm's historic trace is discounted.

    ``discount_all=True`` gives the f-dsw TS baseline, which discounts every
    arm's historic trace each round.
    """

    name = "adts"

    def __init__(self, n_arms: int, rng: np.random.Generator, gamma: float = 0.9,
                 window: int = 100, aggregation: str = "mean", smoothing: float = 1.0,
                 discount_all: bool = False):
        super().__init__(n_arms)
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {sorted(AGGREGATIONS)}, got {aggregation!r}")
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.rng = rng
        self.gamma = check_gamma(gamma)
        self.window = int(window)
        self.aggregation = aggregation
        self.smoothing = float(smoothing)
        self.discount_all = discount_all
        self.alpha = np.zeros(n_arms)
        self.beta = np.zeros(n_arms)
        self.windows = [WindowTrace(self.window) for _ in range(n_arms)]
        self.win_alpha = np.zeros(n_arms)
        self.win_beta = np.zeros(n_arms)

    def draws(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.smoothing
        theta = self.rng.beta(self.alpha + s, self.beta + s)
        theta_short = self.rng.beta(self.win_alpha + s, self.win_beta + s)
        return theta, theta_short

    def scores(self) -> np.ndarray:
        return aggregate(*self.draws(), self.aggregation)

    def _update(self, arm: int, x: int) -> None:
        if self.discount_all:
            self.alpha *= self.gamma
            self.beta *= self.gamma
            self.alpha[arm] += x
            self.beta[arm] += 1 - x
        else:
            self.alpha[arm] = self.gamma * self.alpha[arm] + x
            self.beta[arm] = self.gamma * self.beta[arm] + (1 - x)
        w = self.windows[arm]
        w.push(x)
        self.win_alpha[arm] = w.alpha
        self.win_beta[arm] = w.beta

    def trace(self, arm: int) -> BetaTrace:
        return BetaTrace(float(self.alpha[arm]), float(self.beta[arm]))

    def expected_success(self) -> np.ndarray:
        """Smoothed posterior means (alpha + 1) / (alpha + beta + 2) of the historic traces."""
        s = self.smoothing
        return (self.alpha + s) / (self.alpha + self.beta + 2 * s)


class FDSWTS(ADTS):
    name = "fdsw_ts"

    def __init__(self, n_arms: int, rng: np.random.Generator, gamma: float = 0.99,
                 window: int = 100, aggregation: str = "min", smoothing: float = 1.0):
        super().__init__(n_arms, rng, gamma=gamma, window=window, aggregation=aggregation,
                         smoothing=smoothing, discount_all=True)


def ucb_index(counts: np.ndarray, sums: np.ndarray, total: float, c: float = 1.0) -> np.ndarray:
    """mean + c * sqrt(2 ln(total) / n); arms with no (discounted) count get +inf."""
    counts = np.asarray(counts, dtype=float)
    sums = np.asarray(sums, dtype=float)
    out = np.full(counts.shape, np.inf)
    seen = counts > 0
    log_total = max(np.log(total), 0.0) if total > 0 else 0.0
    out[seen] = sums[seen] / counts[seen] + c * np.sqrt(2.0 * log_total / counts[seen])
    return out


def ucb_select(counts, sums, t: int, c: float = 1.0) -> int:
    """Plain UCB1 choice after ``t`` total pulls."""
    if t < 1:
        raise ValueError("UCB index undefined before the initialization round has started (t=0)")
    return int(np.argmax(ucb_index(counts, sums, t, c)))


class UCB1(Policy):
    name = "ucb1"

    def __init__(self, n_arms: int, c: float = 1.0):
        super().__init__(n_arms)
        if c <= 0:
            raise ValueError(f"exploration coefficient must be > 0, got {c}")
        self.c = float(c)
        self.counts = np.zeros(n_arms)
        self.sums = np.zeros(n_arms)

    def _total(self) -> float:
        return float(self.t)

    def scores(self) -> np.ndarray:
        return ucb_index(self.counts, self.sums, self._total(), self.c)

    def _update(self, arm: int, x: int) -> None:
        self.counts[arm] += 1
        self.sums[arm] += x


class DiscountedUCB(UCB1):
    """D-UCB: counts and reward sums of every arm decay by ``gamma`` each round."""

    name = "d_ucb"

    def __init__(self, n_arms: int, gamma: float = 0.1, c: float = 1.0):
        super().__init__(n_arms, c)
        self.gamma = check_gamma(gamma)

    def _total(self) -> float:
        return float(self.counts.sum())

    def _update(self, arm: int, x: int) -> None:
        self.counts *= self.gamma
        self.sums *= self.gamma
        self.counts[arm] += 1
        self.sums[arm] += x


class SlidingWindowUCB(UCB1):
    """SW-UCB: statistics over the last ``window`` global rounds only."""

    name = "sw_ucb"

    def __init__(self, n_arms: int, window: int = 50, c: float = 1.0):
        super().__init__(n_arms, c)
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.window = int(window)
        self._history: deque[tuple[int, int]] = deque()

    def _total(self) -> float:
        return float(len(self._history))

    def _update(self, arm: int, x: int) -> None:
        self._history.append((arm, x))
        self.counts[arm] += 1
        self.sums[arm] += x
        if len(self._history) > self.window:
            old_arm, old_x = self._history.popleft()
            self.counts[old_arm] -= 1
            self.sums[old_arm] -= old_x


POLICY_TYPES = ("classical_ts", "dts", "adts", "fdsw_ts", "ucb1", "d_ucb", "sw_ucb")

_DEFAULTS = {
    "classical_ts": {},
    "dts": {"gamma": 0.99},
    "adts": {"gamma": 0.9, "window": 100, "aggregation": "mean"},
    "fdsw_ts": {"gamma": 0.99, "window": 100, "aggregation": "min"},
    "ucb1": {},
    "d_ucb": {"gamma": 0.1},
    "sw_ucb": {"window": 50},
}


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative policy description; unset hyperparameters take per-type defaults."""

    type: str
    gamma: float | None = None
    window: int | None = None
    aggregation: str | None = None
    c: float = 1.0
    smoothing: float = 1.0

    def __post_init__(self):
        if self.type not in POLICY_TYPES:
            raise ValueError(f"unknown policy type {self.type!r}; expected one of {POLICY_TYPES}")
        if self.gamma is not None:
            check_gamma(self.gamma)
        if self.window is not None and int(self.window) < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.aggregation is not None and self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {sorted(AGGREGATIONS)}, got {self.aggregation!r}")
        if self.c <= 0:
            raise ValueError(f"exploration coefficient c must be > 0, got {self.c}")
        if self.smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {self.smoothing}")

    def resolved(self) -> "PolicyConfig":
        filled = {k: v for k, v in _DEFAULTS[self.type].items() if getattr(self, k) is None}
        return replace(self, **filled)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self.resolved()).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        unknown = set(d) - {"type", "gamma", "window", "aggregation", "c", "smoothing"}
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        if "type" not in d:
            raise ValueError("policy config needs a 'type'")
        return cls(**d)

    @property
    def is_thompson(self) -> bool:
        return self.type in ("classical_ts", "dts", "adts", "fdsw_ts")


def make_policy(config: PolicyConfig, n_arms: int, rng: np.random.Generator) -> Policy:
    cfg = config.resolved()
    if cfg.type == "classical_ts":
        return ThompsonSampling(n_arms, rng, smoothing=cfg.smoothing)
    if cfg.type == "dts":
        p = ThompsonSampling(n_arms, rng, gamma=cfg.gamma, discount_all=True, smoothing=cfg.smoothing)
        p.name = "dts"
        return p
    if cfg.type == "adts":
        return ADTS(n_arms, rng, gamma=cfg.gamma, window=cfg.window,
                    aggregation=cfg.aggregation, smoothing=cfg.smoothing)
    if cfg.type == "fdsw_ts":
        return FDSWTS(n_arms, rng, gamma=cfg.gamma, window=cfg.window,
                      aggregation=cfg.aggregation, smoothing=cfg.smoothing)
    if cfg.type == "ucb1":
        return UCB1(n_arms, c=cfg.c)
    if cfg.type == "d_ucb":
        return DiscountedUCB(n_arms, gamma=cfg.gamma, c=cfg.c)
    return SlidingWindowUCB(n_arms, window=cfg.window, c=cfg.c)


# Stock-picking line-up, one entry per policy row.
STOCK_PICKING_POLICIES: dict[str, PolicyConfig] = {
    "Classical TS": PolicyConfig("classical_ts"),
    "ADTS (mean)": PolicyConfig("adts", gamma=0.9, window=100, aggregation="mean"),
    "F-DSW TS (min)": PolicyConfig("fdsw_ts", gamma=0.99, window=100, aggregation="min"),
    "D TS": PolicyConfig("dts", gamma=0.99),
    "UCB1": PolicyConfig("ucb1"),
    "D UCB": PolicyConfig("d_ucb", gamma=0.1),
    "SW UCB": PolicyConfig("sw_ucb", window=50),
}
