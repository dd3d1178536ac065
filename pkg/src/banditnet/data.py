"""Returns panels: CSV ingestion, alignment, drift injection, universe filtering, synthetic arms."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

# 44-stock default universe, in canonical order.
SP44_TICKERS = (
    "NVDA", "UNH", "AVGO", "BAC", "LLY", "DHR", "TSLA", "IBM", "GE", "ACN", "XOM", "TMO",
    "AMD", "AMZN", "AAPL", "MRK", "QCOM", "CRM", "GOOGL", "WMT", "CAT", "NFLX", "COST", "ADBE",
    "META", "KO", "ORCL", "PG", "INTU", "PEP", "MSFT", "ABT", "LIN", "CSCO", "UBER", "CMCSA",
    "ABBV", "JNJ", "CVX", "DIS", "JPM", "VZ", "WFC", "INTC",
)

# Best performers by cumulative return, removed one by one in the robustness study.
ROBUSTNESS_REMOVALS = ("NVDA", "AVGO", "TSLA", "LLY", "GE", "AMD", "AAPL", "XOM", "GOOG")

TICKER_ALIASES = {"GOOG": "GOOGL", "GOOGL": "GOOG"}


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """Daily simple returns, assets x days, on dates common to every asset.

    ``prices`` (assets x days+1) and ``base_date`` are kept when the panel
    was built from prices, so it can be written back unchanged.
    """

    tickers: tuple[str, ...]
    dates: tuple[str, ...]
    returns: np.ndarray
    prices: np.ndarray | None = field(default=None, repr=False)
    base_date: str | None = None

    def __post_init__(self):
        r = np.array(self.returns, dtype=float)
        tickers = tuple(str(t) for t in self.tickers)
        dates = tuple(str(d) for d in self.dates)
        if r.shape != (len(tickers), len(dates)):
            raise ValueError(f"returns shape {r.shape} does not match "
                             f"{len(tickers)} tickers x {len(dates)} dates")
        if len(set(tickers)) != len(tickers):
            raise ValueError("duplicate tickers in panel")
        if any(a >= b for a, b in zip(dates, dates[1:])):
            raise ValueError("panel dates must be strictly increasing")
        if not np.all(np.isfinite(r)):
            raise ValueError("panel contains missing or non-finite returns")
        if r.size and r.min() <= -1.0:
            raise ValueError("every return must be greater than -1")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "dates", dates)
        if self.prices is not None:
            p = np.array(self.prices, dtype=float)
            if p.shape != (len(tickers), len(dates) + 1):
                raise ValueError("prices must have one more column than returns")
            p.setflags(write=False)
            object.__setattr__(self, "prices", p)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def index_of(self, ticker: str) -> int:
        try:
            return self.tickers.index(ticker)
        except ValueError:
            raise KeyError(f"ticker {ticker!r} not in panel") from None

    def select(self, tickers: Sequence[str]) -> "ReturnsPanel":
        idx = [self.index_of(t) for t in tickers]
        return ReturnsPanel(
            tuple(tickers), self.dates, self.returns[idx],
            None if self.prices is None else self.prices[idx], self.base_date)

    def drop(self, tickers: Sequence[str]) -> "ReturnsPanel":
        gone = set(tickers)
        for t in gone:
            self.index_of(t)
        return self.select([t for t in self.tickers if t not in gone])

    def equals(self, other: "ReturnsPanel") -> bool:
        return (self.tickers == other.tickers and self.dates == other.dates
                and np.array_equal(self.returns, other.returns))


def _to_iso(values) -> list[str]:
    try:
        parsed = pd.to_datetime(pd.Series(values), format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ValueError(f"unparseable date column: {exc}") from None
    return [d.strftime("%Y-%m-%d") for d in parsed]


def _parse_float(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return np.nan


def _detect_format(columns: Sequence[str]) -> str:
    cols = [c.strip().lower() for c in columns]
    if cols[:1] != ["date"]:
        raise ValueError("price file must start with a 'date' column")
    if set(cols) == {"date", "ticker", "adj_close"}:
        return "long"
    return "wide"


def load_prices(path, format: str = "auto") -> ReturnsPanel:
    """Read adjusted close prices and turn them into aligned simple returns.

    Long format: ``date,ticker,adj_close``. Wide format: ``date,<T1>,<T2>,...``.
    Only dates where every ticker has a price are kept.
    """
    path = Path(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    raw.columns = [c.strip() for c in raw.columns]
    if format == "auto":
        format = _detect_format(list(raw.columns))
    if format == "long":
        raw.columns = [c.lower() for c in raw.columns]
        missing = {"date", "ticker", "adj_close"} - set(raw.columns)
        if missing:
            raise ValueError(f"{path}: long format needs columns date,ticker,adj_close; missing {sorted(missing)}")
        raw["date"] = _to_iso(raw["date"])
        raw["ticker"] = raw["ticker"].str.strip()
        dup = raw.duplicated(["date", "ticker"])
        if dup.any():
            row = raw[dup].iloc[0]
            raise ValueError(f"{path}: duplicate (date, ticker) row ({row['date']}, {row['ticker']})")
        tickers = list(dict.fromkeys(raw["ticker"]))
        wide = raw.pivot(index="date", columns="ticker", values="adj_close").reindex(columns=tickers)
    elif format == "wide":
        date_col = raw.columns[0]
        tickers = list(raw.columns[1:])
        if not tickers:
            raise ValueError(f"{path}: wide format needs at least one ticker column")
        if len(set(tickers)) != len(tickers):
            raise ValueError(f"{path}: duplicate ticker columns")
        raw[date_col] = _to_iso(raw[date_col])
        if raw[date_col].duplicated().any():
            raise ValueError(f"{path}: duplicate date rows")
        wide = raw.set_index(date_col)[tickers]
    else:
        raise ValueError(f"unknown price format {format!r}; use 'long', 'wide' or 'auto'")

    wide = wide.replace("", np.nan)
    # float() rounds correctly, so written prices read back bit for bit
    prices = wide.apply(lambda col: col.map(_parse_float)).astype(float).sort_index()
    bad_text = prices.isna() & wide.reindex(prices.index).notna()
    if bad_text.any().any():
        raise ValueError(f"{path}: non-numeric price values")
    if (prices <= 0).any().any():
        t = prices.columns[(prices <= 0).any()][0]
        raise ValueError(f"{path}: non-positive price for {t}")
    prices = prices.dropna(how="any")
    if len(prices) < 2:
        raise ValueError(f"{path}: fewer than 2 common dates across {len(tickers)} tickers")
    p = prices.to_numpy(dtype=float).T
    returns = p[:, 1:] / p[:, :-1] - 1.0
    dates = list(prices.index)
    return ReturnsPanel(tuple(tickers), tuple(dates[1:]), returns, prices=p, base_date=dates[0])


def reconstruct_prices(panel: ReturnsPanel, start: float = 1.0) -> np.ndarray:
    """Price levels implied by the returns, starting at ``start``."""
    growth = np.cumprod(1.0 + panel.returns, axis=1)
    return np.hstack([np.full((panel.n_assets, 1), start), start * growth])


def write_panel(panel: ReturnsPanel, path) -> None:
    """Write a wide price CSV that :func:`load_prices` reads back to the same panel."""
    if panel.prices is not None and panel.base_date is not None:
        prices, base = panel.prices, panel.base_date
    else:
        prices = reconstruct_prices(panel)
        base = str(np.datetime64(panel.dates[0]) - np.timedelta64(1, "D"))
    dates = [base, *panel.dates]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.tickers])
        for j, d in enumerate(dates):
            w.writerow([d, *(repr(float(v)) for v in prices[:, j])])


@dataclass(frozen=True)
class DriftTransform:
    """Shock applied to one ticker's returns strictly after ``cut_date``."""

    target: str
    cut_date: str
    mode: str = "negate"
    factor: float = 1.0

    def __post_init__(self):
        if self.mode not in ("negate", "scale"):
            raise ValueError(f"drift mode must be 'negate' or 'scale', got {self.mode!r}")


def apply_drift(panel: ReturnsPanel, transform: DriftTransform) -> ReturnsPanel:
    i = panel.index_of(transform.target)
    cut = _to_iso([transform.cut_date])[0]
    if not panel.dates[0] <= cut <= panel.dates[-1]:
        raise ValueError(f"cut date {cut} outside panel range {panel.dates[0]}..{panel.dates[-1]}")
    after = np.array([d > cut for d in panel.dates])
    r = panel.returns.copy()
    mult = -1.0 if transform.mode == "negate" else float(transform.factor)
    r[i, after] = r[i, after] * mult
    if r[i].min() <= -1.0:
        raise ValueError(f"drift pushes a return of {transform.target} to -100% or below")
    return ReturnsPanel(panel.tickers, panel.dates, r)


def resolve_tickers(panel: ReturnsPanel, tickers: Sequence[str]) -> list[str]:
    """Map each name to a panel ticker, accepting known share-class aliases."""
    out = []
    for t in tickers:
        if t in panel.tickers:
            out.append(t)
        elif TICKER_ALIASES.get(t) in panel.tickers:
            out.append(TICKER_ALIASES[t])
        else:
            raise KeyError(f"ticker {t!r} not in panel")
    return out


def remove_top(panel: ReturnsPanel, ranked_removals: Sequence[str], m: int) -> ReturnsPanel:
    """Panel without the first ``m`` tickers of ``ranked_removals``."""
    if not 0 <= m <= len(ranked_removals):
        raise ValueError(f"m={m} outside 0..{len(ranked_removals)}")
    names = resolve_tickers(panel, ranked_removals)
    return panel.drop(names[:m]) if m else panel


def rank_by_cumulative_return(panel: ReturnsPanel) -> list[str]:
    total = np.prod(1.0 + panel.returns, axis=1)
    order = sorted(range(panel.n_assets), key=lambda i: (-total[i], i))
    return [panel.tickers[i] for i in order]


@dataclass(frozen=True)
class SyntheticSpec:
    """Piecewise-stationary Bernoulli arms: each segment sets every arm's success probability."""

    n_arms: int
    horizon: int
    segments: tuple[tuple[int, tuple[float, ...]], ...]

    def __post_init__(self):
        if self.n_arms < 1 or self.horizon < 1:
            raise ValueError("synthetic spec needs n_arms >= 1 and horizon >= 1")
        segs = tuple((int(s), tuple(float(p) for p in probs)) for s, probs in self.segments)
        if not segs or segs[0][0] != 0:
            raise ValueError("first segment must start at step 0")
        starts = [s for s, _ in segs]
        if any(a >= b for a, b in zip(starts, starts[1:])):
            raise ValueError("segment starts must be strictly increasing")
        for s, probs in segs:
            if len(probs) != self.n_arms:
                raise ValueError(f"segment at {s} has {len(probs)} probabilities for {self.n_arms} arms")
            if any(not 0.0 <= p <= 1.0 for p in probs):
                raise ValueError(f"segment at {s} has probabilities outside [0, 1]")
        object.__setattr__(self, "segments", segs)

    def probabilities(self) -> np.ndarray:
        """Success probability of every arm at every step (arms x steps)."""
        p = np.empty((self.n_arms, self.horizon))
        bounds = [s for s, _ in self.segments[1:]] + [self.horizon]
        for (start, probs), end in zip(self.segments, bounds):
            p[:, start:end] = np.asarray(probs)[:, None]
        return p

    def to_dict(self) -> dict:
        return {"n_arms": self.n_arms, "horizon": self.horizon,
                "segments": [{"start": s, "probs": list(p)} for s, p in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        segs = tuple((seg["start"], tuple(seg["probs"])) for seg in d["segments"])
        return cls(int(d["n_arms"]), int(d["horizon"]), segs)


def rotating_spec(n_arms: int, horizon: int, n_segments: int,
                  p_best: float = 0.8, p_other: float = 0.2) -> SyntheticSpec:
    """Best arm moves to the next index at each of ``n_segments - 1`` evenly spaced change points."""
    segs = []
    for j in range(n_segments):
        probs = [p_other] * n_arms
        probs[j % n_arms] = p_best
        segs.append((j * horizon // n_segments, tuple(probs)))
    return SyntheticSpec(n_arms, horizon, tuple(segs))


def synthetic_dates(n: int, start: str = "2000-01-03") -> tuple[str, ...]:
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return tuple(str(d) for d in days)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> ReturnsPanel:
    """Bernoulli reward panel (values 0/1) on business-day dates, deterministic per seed."""
    rng = np.random.default_rng(seed)
    draws = rng.random((spec.n_arms, spec.horizon))
    rewards = (draws < spec.probabilities()).astype(float)
    tickers = tuple(f"arm{i}" for i in range(spec.n_arms))
    return ReturnsPanel(tickers, synthetic_dates(spec.horizon), rewards)


def simulate_prices(n_assets: int, n_days: int, seed: int, regimes: int = 2,
                    start: str = "2020-04-01") -> ReturnsPanel:
    """Toy market: Gaussian daily returns whose drifts are reshuffled at each regime change.

    Meant for demos and tests when no price file is at hand.
    """
    if n_assets < 1 or n_days < 2 or regimes < 1:
        raise ValueError("need n_assets >= 1, n_days >= 2 and regimes >= 1")
    rng = np.random.default_rng(seed)
    drift = rng.normal(5e-4, 1e-3, n_assets)
    vol = rng.uniform(0.01, 0.03, n_assets)
    r = np.empty((n_assets, n_days - 1))
    bounds = np.linspace(0, n_days - 1, regimes + 1).astype(int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        r[:, lo:hi] = drift[:, None] + vol[:, None] * rng.standard_normal((n_assets, hi - lo))
        drift = rng.permutation(drift)
    r = np.clip(r, -0.5, 0.5)
    prices = 100.0 * np.hstack([np.ones((n_assets, 1)), np.cumprod(1.0 + r, axis=1)])
    dates = synthetic_dates(n_days, start)
    width = max(2, len(str(n_assets - 1)))
    tickers = tuple(f"S{i:0{width}d}" for i in range(n_assets))
    # returns recomputed from the prices, exactly as load_prices would
    r = prices[:, 1:] / prices[:, :-1] - 1.0
    return ReturnsPanel(tickers, dates[1:], r, prices=prices, base_date=dates[0])
