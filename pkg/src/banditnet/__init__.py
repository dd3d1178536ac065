"""Non-stationary bandits (ADTS, CADTS and baselines), bandit networks and portfolio experiments."""
from .combinatorial import CADTS, Superarm, WeightGrid, enumerate_superarms
from .core import BetaTrace, PullRecord, WindowTrace, cumulative_regret, make_rng, sample_beta, update_discounted
from .data import DriftTransform, ReturnsPanel, SyntheticSpec, apply_drift, generate_synthetic, load_prices
from .metrics import RewardFnSpec, compute_metrics, reward_value
from .networks import NetworkConfig, make_network
from .policies import ADTS, FDSWTS, PolicyConfig, make_policy

__version__ = "0.1.0"

__all__ = [
    "ADTS", "BetaTrace", "CADTS", "DriftTransform", "FDSWTS", "NetworkConfig", "PolicyConfig",
    "PullRecord", "ReturnsPanel", "RewardFnSpec", "Superarm", "SyntheticSpec", "WeightGrid",
    "WindowTrace", "apply_drift", "compute_metrics", "cumulative_regret", "enumerate_superarms",
    "generate_synthetic", "load_prices", "make_network", "make_policy", "make_rng", "reward_value",
    "sample_beta", "update_discounted",
]
