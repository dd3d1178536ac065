"""Posterior containers, binarized feedback and regret accounting.

Every policy in the package works on Beta-Bernoulli posteriors fed with a
binary reward: 1 when the chosen option's raw reward ties the best raw
reward of the step, 0 otherwise.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TIE_TOLERANCE = 1e-12


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded generator; ``stream`` selects an independent child stream.

    ``make_rng(s)`` draws exactly like ``np.random.default_rng(s)``.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(stream))))


@dataclass(frozen=True)
class BetaTrace:
    """Discounted success/failure pseudo-counts of one arm."""

    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ValueError(f"pseudo-counts must be non-negative, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        """Mean of Beta(alpha + 1, beta + 1)."""
        return (self.alpha + 1.0) / (self.alpha + self.beta + 2.0)


class WindowTrace:
    """FIFO of the last ``capacity`` binary rewards of one arm."""

    __slots__ = ("capacity", "_entries", "_ones")

    def __init__(self, capacity: int, entries: Iterable[int] = ()):
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._entries: deque[int] = deque(maxlen=self.capacity)
        self._ones = 0
        for x in entries:
            self.push(x)

    def push(self, x: int) -> None:
        x = _check_binary(x)
        if len(self._entries) == self.capacity:
            self._ones -= self._entries[0]
        self._entries.append(x)
        self._ones += x

    @property
    def entries(self) -> tuple[int, ...]:
        return tuple(self._entries)

    @property
    def alpha(self) -> int:
        return self._ones

    @property
    def beta(self) -> int:
        return len(self._entries) - self._ones

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"WindowTrace(capacity={self.capacity}, entries={list(self._entries)})"


@dataclass(frozen=True)
class PullRecord:
    step: int
    chosen: int
    raw_reward: float
    binary_reward: int
    oracle_reward: int = 1


def _check_binary(x) -> int:
    if x not in (0, 1):
        raise ValueError(f"binary reward must be 0 or 1, got {x!r}")
    return int(x)


def sample_beta(trace: BetaTrace, rng: np.random.Generator, smoothing: float = 1.0) -> float:
    """Draw from Beta(alpha + smoothing, beta + smoothing)."""
    if smoothing < 0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")
    a = trace.alpha + smoothing
    b = trace.beta + smoothing
    if a <= 0 or b <= 0:
        raise ValueError(f"degenerate Beta({a}, {b})")
    return float(rng.beta(a, b))


def update_discounted(trace: BetaTrace, gamma: float, x: int) -> BetaTrace:
    """Return ``gamma * (alpha, beta) + (x, 1 - x)``; the input is left untouched."""
    check_gamma(gamma)
    x = _check_binary(x)
    return BetaTrace(gamma * trace.alpha + x, gamma * trace.beta + (1 - x))


def check_gamma(gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {gamma}")
    return float(gamma)


def binarize(chosen_value: float, values: Sequence[float] | np.ndarray, tol: float = TIE_TOLERANCE) -> int:
    """1 iff ``chosen_value`` ties the maximum of ``values`` within ``tol``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot binarize against an empty candidate set")
    return int(abs(float(chosen_value) - float(values.max())) <= tol)


def cumulative_regret(history: Iterable[PullRecord]) -> float:
    return float(sum(r.oracle_reward - r.binary_reward for r in history))


def regret_curve(binary_rewards: Sequence[int]) -> np.ndarray:
    """Running regret of a binary reward stream (oracle reward is always 1)."""
    x = np.asarray(binary_rewards, dtype=float)
    return np.cumsum(1.0 - x)


class Policy(ABC):
    """Single-pull bandit policy over ``n_arms`` arms.

    ``scores`` returns one value per arm (it may consume randomness);
    ``select`` plays its argmax with ties going to the lowest index.
    """

    name = "policy"

    def __init__(self, n_arms: int):
        if n_arms < 1:
            raise ValueError(f"need at least one arm, got {n_arms}")
        self.n_arms = int(n_arms)
        self.t = 0

    @abstractmethod
    def scores(self) -> np.ndarray:
        ...

    def select(self) -> int:
        return int(np.argmax(self.scores()))

    def update(self, arm: int, x: int) -> None:
        self._check_arm(arm)
        self._update(arm, _check_binary(x))
        self.t += 1

    @abstractmethod
    def _update(self, arm: int, x: int) -> None:
        ...

    def _check_arm(self, arm: int) -> None:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range for {self.n_arms} arms")


def play(policy: Policy, observed_rewards: Sequence[float] | np.ndarray, t: int) -> PullRecord:
    """One bandit round: select, binarize against all arms, update the chosen arm."""
    rewards = np.asarray(observed_rewards, dtype=float)
    if rewards.shape != (policy.n_arms,):
        raise ValueError(f"expected {policy.n_arms} rewards, got shape {rewards.shape}")
    chosen = policy.select()
    x = binarize(rewards[chosen], rewards)
    policy.update(chosen, x)
    return PullRecord(step=t, chosen=chosen, raw_reward=float(rewards[chosen]), binary_reward=x)


def policy_step(policy: Policy, observed_rewards: Sequence[float] | np.ndarray, t: int) -> int:
    return play(policy, observed_rewards, t).chosen
