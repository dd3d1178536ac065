"""Two-layer bandit networks: a stock filter feeding an allocating bandit."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .combinatorial import CADTS, DEFAULT_CAP
from .core import Policy, binarize, make_rng
from .metrics import RewardFnSpec
from .policies import PolicyConfig, make_policy

ARCHITECTURES = ("ranker_cadts", "two_layer_adts")
SUBSET_CACHE_SIZE = 64


@dataclass(frozen=True)
class NetworkConfig:
    architecture: str
    k: int
    layer1: PolicyConfig = field(default_factory=lambda: PolicyConfig("adts"))
    layer1_reward: RewardFnSpec = field(default_factory=lambda: RewardFnSpec("mean_return", 100))
    layer2: PolicyConfig = field(default_factory=lambda: PolicyConfig("adts"))
    layer2_reward: RewardFnSpec = field(default_factory=lambda: RewardFnSpec("sharpe", 60))
    partition: str = "contiguous"
    partition_seed: int = 0
    max_nonzero: int | None = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.k < 1:
            raise ValueError(f"portfolio size k must be >= 1, got {self.k}")
        if self.partition not in ("contiguous", "shuffle"):
            raise ValueError(f"partition rule must be 'contiguous' or 'shuffle', got {self.partition!r}")
        if self.architecture == "ranker_cadts" and self.layer2.type != "adts":
            raise ValueError("the allocating layer of a ranker_cadts network is CADTS; layer2.type must be 'adts'")
        if self.architecture == "two_layer_adts" and not self.layer2.is_thompson:
            raise ValueError("two_layer_adts weights need a Thompson-sampling second layer")

    def to_dict(self) -> dict:
        d = {
            "architecture": self.architecture,
            "k": self.k,
            "layer1": self.layer1.to_dict(),
            "layer1_reward": self.layer1_reward.to_dict(),
            "layer2": self.layer2.to_dict(),
            "layer2_reward": self.layer2_reward.to_dict(),
        }
        if self.architecture == "two_layer_adts":
            d["partition"] = self.partition
            d["partition_seed"] = self.partition_seed
        if self.max_nonzero is not None:
            d["max_nonzero"] = self.max_nonzero
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {"architecture", "k", "layer1", "layer1_reward", "layer2", "layer2_reward",
                 "partition", "partition_seed", "max_nonzero"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown network keys: {sorted(unknown)}")
        kw = {k: d[k] for k in ("architecture", "k", "partition", "partition_seed", "max_nonzero") if k in d}
        for key in ("layer1", "layer2"):
            if key in d:
                kw[key] = PolicyConfig.from_dict(d[key])
        for key in ("layer1_reward", "layer2_reward"):
            if key in d:
                kw[key] = RewardFnSpec.from_dict(d[key])
        return cls(**kw)


@dataclass(frozen=True)
class RankedSelection:
    step: int
    ranked: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError("ranked indices must be distinct")


@dataclass(frozen=True)
class NetworkDecision:
    """Allocation produced for one day.

    ``numerators``/``denominator`` carry the exact weights when the
    allocation comes from a CADTS superarm.
    """

    weights: np.ndarray
    selection: tuple[int, ...]
    layer1_reward: int
    layer2_reward: int
    numerators: tuple[int, ...] | None = None
    denominator: int | None = None


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, best first, lower index winning ties."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")[:k]


def layer1_rank(policy: Policy, universe_rewards, k: int, t: int = 0) -> RankedSelection:
    """Rank the ``k`` best arms by the policy's scores, then update it on its top-1 arm."""
    values = np.asarray(universe_rewards, dtype=float)
    if values.shape != (policy.n_arms,):
        raise ValueError(f"expected {policy.n_arms} rewards, got shape {values.shape}")
    if not 1 <= k < policy.n_arms:
        raise ValueError(f"k must satisfy 1 <= k < {policy.n_arms}, got {k}")
    scores = policy.scores()
    ranked = top_k(scores, k)
    best = int(ranked[0])
    policy.update(best, binarize(values[best], values))
    return RankedSelection(t, tuple(int(i) for i in ranked), tuple(float(scores[i]) for i in ranked))


def expected_success(policy) -> np.ndarray:
    """Smoothed Beta means (alpha + s) / (alpha + beta + 2s) of every arm's historic trace."""
    s = policy.smoothing
    return (policy.alpha + s) / (policy.alpha + policy.beta + 2 * s)


def normalized_weights(means: np.ndarray) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    return means / means.sum()


def partition_universe(n_assets: int, k: int, rule: str = "contiguous", seed: int = 0) -> list[list[int]]:
    """Split asset indices into ``k`` disjoint groups whose sizes differ by at most one."""
    if not 1 <= k <= n_assets:
        raise ValueError(f"cannot split {n_assets} assets into {k} groups")
    order = np.arange(n_assets)
    if rule == "shuffle":
        order = np.random.default_rng(seed).permutation(n_assets)
    elif rule != "contiguous":
        raise ValueError(f"unknown partition rule {rule!r}")
    return [[int(i) for i in chunk] for chunk in np.array_split(order, k)]


class RankerCadtsNetwork:
    """Layer 1 ranks the universe; CADTS allocates over the top ``k``.

    CADTS posteriors are kept per asset subset (LRU, 64 subsets) so a
    subset that comes back resumes its learning.
    """

    def __init__(self, n_assets: int, config: NetworkConfig, seed: int, cap: int = DEFAULT_CAP):
        if config.architecture != "ranker_cadts":
            raise ValueError("config is not a ranker_cadts network")
        if not config.k < n_assets:
            raise ValueError(f"ranker_cadts needs k < number of assets ({config.k} >= {n_assets})")
        self.n_assets = n_assets
        self.config = config
        self.cap = cap
        self.layer1 = make_policy(config.layer1, n_assets, make_rng(seed, 1, 0))
        self._rng2 = make_rng(seed, 2)
        self._cache: OrderedDict[tuple[int, ...], CADTS] = OrderedDict()
        self.t = 0

    def cadts_for(self, subset: tuple[int, ...]) -> CADTS:
        if subset in self._cache:
            self._cache.move_to_end(subset)
            return self._cache[subset]
        l2 = self.config.layer2.resolved()
        cadts = CADTS(len(subset), self._rng2, gamma=l2.gamma, window=l2.window,
                      aggregation=l2.aggregation, smoothing=l2.smoothing,
                      max_nonzero=self.config.max_nonzero, cap=self.cap)
        self._cache[subset] = cadts
        if len(self._cache) > SUBSET_CACHE_SIZE:
            self._cache.popitem(last=False)
        return cadts

    def step(self, fn1_values, fn2_values) -> NetworkDecision:
        fn1 = np.asarray(fn1_values, dtype=float)
        fn2 = np.asarray(fn2_values, dtype=float)
        ranked = layer1_rank(self.layer1, fn1, self.config.k, self.t)
        x1 = binarize(fn1[ranked.ranked[0]], fn1)
        subset = tuple(sorted(ranked.ranked))
        nums = [0] * self.n_assets
        if len(subset) == 1:
            nums[subset[0]] = 1
            denom, x2 = 1, 1
        else:
            cadts = self.cadts_for(subset)
            superarm, rec = cadts.step(fn2[list(subset)], self.t)
            for asset, n in zip(subset, superarm.numerators):
                nums[asset] = n
            denom, x2 = superarm.denominator, rec.binary_reward
        self.t += 1
        weights = np.asarray(nums, dtype=float) / denom
        return NetworkDecision(weights, tuple(ranked.ranked), x1, x2, tuple(nums), denom)


class TwoLayerAdtsNetwork:
    """One policy per partition picks a champion; a second ADTS learns over the champions.

    Weights normalize the second layer's smoothed Beta means over the
    ``k`` champion slots.
    """

    def __init__(self, n_assets: int, config: NetworkConfig, seed: int):
        if config.architecture != "two_layer_adts":
            raise ValueError("config is not a two_layer_adts network")
        if n_assets < config.k:
            raise ValueError(f"cannot form {config.k} partitions from {n_assets} assets")
        self.n_assets = n_assets
        self.config = config
        self.partitions = partition_universe(n_assets, config.k, config.partition, config.partition_seed)
        self.layer1 = [make_policy(config.layer1, len(part), make_rng(seed, 1, j))
                       for j, part in enumerate(self.partitions)]
        self.layer2 = make_policy(config.layer2, config.k, make_rng(seed, 2))
        self.t = 0

    def step(self, fn1_values, fn2_values) -> NetworkDecision:
        fn1 = np.asarray(fn1_values, dtype=float)
        fn2 = np.asarray(fn2_values, dtype=float)
        if fn1.shape != (self.n_assets,) or fn2.shape != (self.n_assets,):
            raise ValueError(f"expected {self.n_assets} reward values per layer")
        local = [p.select() for p in self.layer1]
        champions = [part[i] for part, i in zip(self.partitions, local)]
        share = normalized_weights(expected_success(self.layer2))
        slot = self.layer2.select()

        x1 = 0
        for j, (policy, part, i) in enumerate(zip(self.layer1, self.partitions, local)):
            x = binarize(fn1[part[i]], fn1[part])
            policy.update(i, x)
            if j == slot:
                x1 = x
        x2 = binarize(fn2[champions[slot]], fn2[champions])
        self.layer2.update(slot, x2)
        self.t += 1

        weights = np.zeros(self.n_assets)
        weights[champions] = share
        return NetworkDecision(weights, tuple(champions), x1, x2)


def make_network(config: NetworkConfig, n_assets: int, seed: int):
    if config.architecture == "ranker_cadts":
        return RankerCadtsNetwork(n_assets, config, seed)
    return TwoLayerAdtsNetwork(n_assets, config, seed)


def network_step(network, fn1_values: Sequence[float], fn2_values: Sequence[float]) -> NetworkDecision:
    return network.step(fn1_values, fn2_values)


# Portfolio line-up, one entry per network instance.
PORTFOLIO_NETWORKS: dict[str, NetworkConfig] = {
    "SW UCB | CADTS (k=4)": NetworkConfig("ranker_cadts", 4, layer1=PolicyConfig("sw_ucb", window=50)),
    "ADTS | CADTS (k=4)": NetworkConfig("ranker_cadts", 4),
    "Two Layer ADTS (k=4)": NetworkConfig("two_layer_adts", 4),
    "Two Layer ADTS (k=10)": NetworkConfig("two_layer_adts", 10),
    "Two Layer ADTS (k=15)": NetworkConfig("two_layer_adts", 15),
}
