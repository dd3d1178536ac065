"""Experiment configuration: TOML (or resolved JSON) files to validated records."""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .benchmarks import BENCHMARK_MODELS, BenchmarkConfig
from .data import DriftTransform, SyntheticSpec
from .metrics import RewardFnSpec
from .networks import PORTFOLIO_NETWORKS, NetworkConfig
from .policies import STOCK_PICKING_POLICIES, PolicyConfig

EXPERIMENTS = ("stock_picking", "portfolio", "robustness")
DATA_DIR_ENV = "BANDITNET_DATA_DIR"

DEFAULT_BENCHMARKS = {
    "stock_picking": ("index",),
    "portfolio": ("capm", "markowitz", "risk_parity", "equal_weights", "index"),
    "robustness": ("capm", "index"),
}


class ConfigError(ValueError):
    def __init__(self, message: str, key: tuple = ()):
        self.key = key
        where = ".".join(f"[{k}]" if isinstance(k, int) else str(k) for k in key).replace(".[", "[")
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    format: str = "auto"
    index_ticker: str | None = None
    synthetic: SyntheticSpec | None = None
    synthetic_seed: int = 0
    return_scale: float = 0.01

    def resolved_path(self) -> Path:
        p = Path(self.path)
        base = os.environ.get(DATA_DIR_ENV)
        if not p.is_absolute() and base:
            return Path(base) / p
        return p

    def to_dict(self) -> dict:
        if self.synthetic is not None:
            d = {"synthetic": self.synthetic.to_dict(), "synthetic_seed": self.synthetic_seed,
                 "return_scale": self.return_scale}
        else:
            d = {"path": self.path, "format": self.format}
        if self.index_ticker is not None:
            d["index_ticker"] = self.index_ticker
        return d


@dataclass(frozen=True)
class RobustnessConfig:
    removal_list: tuple[str, ...] | None = None
    max_m: int = 9

    def to_dict(self) -> dict:
        d = {"max_m": self.max_m}
        if self.removal_list is not None:
            d["removal_list"] = list(self.removal_list)
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    data: DataConfig
    policies: dict[str, PolicyConfig] = field(default_factory=dict)
    networks: dict[str, NetworkConfig] = field(default_factory=dict)
    reward: RewardFnSpec = field(default_factory=RewardFnSpec)
    benchmarks: tuple[BenchmarkConfig, ...] = ()
    n_seeds: int = 30
    seed_base: int = 0
    drift: DriftTransform | None = None
    robustness: RobustnessConfig = field(default_factory=RobustnessConfig)
    out: str | None = None
    workers: int = 1
    periods_per_year: int = 252

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return parse_config(d)

    def to_dict(self) -> dict:
        d: dict = {
            "experiment": self.experiment,
            "n_seeds": self.n_seeds,
            "seed_base": self.seed_base,
            "workers": self.workers,
            "periods_per_year": self.periods_per_year,
            "data": self.data.to_dict(),
        }
        if self.out is not None:
            d["out"] = self.out
        if self.experiment == "stock_picking":
            d["reward"] = self.reward.to_dict()
            d["policies"] = [{"name": n, **c.to_dict()} for n, c in self.policies.items()]
        else:
            d["networks"] = [{"name": n, **c.to_dict()} for n, c in self.networks.items()]
        if self.benchmarks:
            b = self.benchmarks[0]
            d["benchmarks"] = {"models": [x.model for x in self.benchmarks],
                               "lookback": b.lookback, "rebalance_every": b.rebalance_every}
        else:
            d["benchmarks"] = {"models": []}
        if self.drift is not None:
            d["drift"] = {"target": self.drift.target, "cut_date": self.drift.cut_date,
                          "mode": self.drift.mode, "factor": self.drift.factor}
        if self.experiment == "robustness":
            d["robustness"] = self.robustness.to_dict()
        return d


def _require(d: dict, allowed: set, key: tuple) -> None:
    if not isinstance(d, dict):
        raise ConfigError("expected a table", key)
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", key + (unknown[0],))


def _int(v, key: tuple, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", key)
    if lo is not None and v < lo:
        raise ConfigError(f"must be >= {lo}, got {v}", key)
    return v


def _wrap(fn, key: tuple):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc).strip("'\""), key) from None


def _named_list(items, key: str, parse) -> dict:
    if not isinstance(items, list):
        raise ConfigError("expected a list of tables", (key,))
    out = {}
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "name" not in item:
            raise ConfigError("every entry needs a 'name'", (key, i))
        name = str(item["name"])
        if name in out:
            raise ConfigError(f"duplicate name {name!r}", (key, i, "name"))
        body = {k: v for k, v in item.items() if k != "name"}
        out[name] = _wrap(lambda: parse(body), (key, i))
    return out


def parse_config(d: dict) -> ExperimentConfig:
    """Validate a raw mapping (from TOML or JSON) and fill defaults."""
    _require(d, {"experiment", "data", "policies", "networks", "reward", "benchmarks", "n_seeds",
                 "seed_base", "drift", "robustness", "out", "workers", "periods_per_year"}, ())
    experiment = d.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"must be one of {EXPERIMENTS}, got {experiment!r}", ("experiment",))

    raw_data = d.get("data")
    if raw_data is None:
        raise ConfigError("a [data] table is required", ("data",))
    _require(raw_data, {"path", "format", "index_ticker", "synthetic", "synthetic_seed", "return_scale"}, ("data",))
    if ("path" in raw_data) == ("synthetic" in raw_data):
        raise ConfigError("give exactly one of 'path' or 'synthetic'", ("data",))
    synthetic = None
    if "synthetic" in raw_data:
        synthetic = _wrap(lambda: SyntheticSpec.from_dict(raw_data["synthetic"]), ("data", "synthetic"))
    fmt = raw_data.get("format", "auto")
    if fmt not in ("auto", "long", "wide"):
        raise ConfigError(f"must be auto, long or wide, got {fmt!r}", ("data", "format"))
    scale = raw_data.get("return_scale", 0.01)
    if not isinstance(scale, (int, float)) or not 0 < scale < 1:
        raise ConfigError(f"must lie in (0, 1), got {scale!r}", ("data", "return_scale"))
    data = DataConfig(
        path=raw_data.get("path"), format=fmt, index_ticker=raw_data.get("index_ticker"),
        synthetic=synthetic,
        synthetic_seed=_int(raw_data.get("synthetic_seed", 0), ("data", "synthetic_seed"), 0),
        return_scale=float(scale),
    )

    policies: dict = {}
    networks: dict = {}
    if experiment == "stock_picking":
        if "networks" in d:
            raise ConfigError("networks are not used in a stock_picking experiment", ("networks",))
        policies = (_named_list(d["policies"], "policies", PolicyConfig.from_dict)
                    if "policies" in d else dict(STOCK_PICKING_POLICIES))
    else:
        if "policies" in d:
            raise ConfigError(f"policies are not used in a {experiment} experiment; use [[networks]]", ("policies",))
        networks = (_named_list(d["networks"], "networks", NetworkConfig.from_dict)
                    if "networks" in d else dict(PORTFOLIO_NETWORKS))

    default_reward = {"kind": "mean_return", "window": 1 if synthetic is not None else 100}
    reward = _wrap(lambda: RewardFnSpec.from_dict(d.get("reward", default_reward)), ("reward",))

    raw_b = d.get("benchmarks", {})
    _require(raw_b, {"models", "lookback", "rebalance_every"}, ("benchmarks",))
    models = raw_b.get("models", list(DEFAULT_BENCHMARKS[experiment]))
    if len(set(models)) != len(models):
        raise ConfigError("duplicate benchmark models", ("benchmarks", "models"))
    for m in models:
        if m not in BENCHMARK_MODELS:
            raise ConfigError(f"unknown model {m!r}; expected {BENCHMARK_MODELS}", ("benchmarks", "models"))
    lookback = _int(raw_b.get("lookback", 252), ("benchmarks", "lookback"), 1)
    rebalance = _int(raw_b.get("rebalance_every", 21), ("benchmarks", "rebalance_every"), 1)
    benchmarks = tuple(_wrap(lambda m=m: BenchmarkConfig(m, lookback, rebalance), ("benchmarks", "lookback"))
                       for m in models)

    drift = None
    if "drift" in d:
        raw = d["drift"]
        _require(raw, {"target", "cut_date", "mode", "factor"}, ("drift",))
        drift = _wrap(lambda: DriftTransform(raw["target"], str(raw["cut_date"]), raw.get("mode", "negate"),
                                             float(raw.get("factor", 1.0))), ("drift",))

    raw_r = d.get("robustness", {})
    _require(raw_r, {"removal_list", "max_m"}, ("robustness",))
    removal = raw_r.get("removal_list")
    robustness = RobustnessConfig(
        removal_list=None if removal is None else tuple(str(t) for t in removal),
        max_m=_int(raw_r.get("max_m", 9), ("robustness", "max_m"), 0),
    )
    if robustness.removal_list is not None and robustness.max_m > len(robustness.removal_list):
        raise ConfigError("max_m exceeds the removal list length", ("robustness", "max_m"))

    ppy = _int(d.get("periods_per_year", 252), ("periods_per_year",), 1)
    return ExperimentConfig(
        experiment=experiment, data=data, policies=policies, networks=networks, reward=reward,
        benchmarks=benchmarks, n_seeds=_int(d.get("n_seeds", 30), ("n_seeds",), 1),
        seed_base=_int(d.get("seed_base", 0), ("seed_base",), 0), drift=drift, robustness=robustness,
        out=d.get("out"), workers=_int(d.get("workers", 1), ("workers",), 1), periods_per_year=ppy,
    )


def _locate(text: str, key: tuple) -> int | None:
    """Best-effort line number of a key path inside TOML text."""
    lines = text.splitlines()
    start = 0
    path = list(key)
    if len(path) >= 2 and isinstance(path[1], int):
        header = re.compile(rf"^\s*\[\[\s*{re.escape(str(path[0]))}\s*\]\]")
        hits = [i for i, ln in enumerate(lines) if header.match(ln)]
        if path[1] < len(hits):
            start = hits[path[1]]
            path = path[2:]
        else:
            return None
    elif len(path) >= 2:
        header = re.compile(rf"^\s*\[\s*{re.escape(str(path[0]))}\s*\]")
        hits = [i for i, ln in enumerate(lines) if header.match(ln)]
        if hits:
            start = hits[0]
            path = path[1:]
    if not path:
        return start + 1
    name = re.compile(rf"^\s*{re.escape(str(path[-1]))}\s*=")
    for i in range(start, len(lines)):
        if name.match(lines[i]):
            return i + 1
    return start + 1 if start else None


def load_config(path) -> ExperimentConfig:
    """Load a TOML experiment file or a ``config.resolved.json`` echo."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        try:
            return parse_config(raw)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        line = _locate(text, exc.key) if exc.key else None
        where = f"{path}: line {line}" if line else str(path)
        raise ConfigError(f"{where}: {exc}") from None
