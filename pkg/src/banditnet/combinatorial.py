"""Discrete-weight superarms and the combinatorial ADTS policy (CADTS)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import PullRecord, play
from .policies import ADTS

DEFAULT_CAP = 10**6


class EnumerationTooLarge(ValueError):
    """Raised instead of silently truncating a superarm enumeration."""


@dataclass(frozen=True)
class WeightGrid:
    """Weight levels 0, s, 2s, ..., 1 with step s = 1 / (2K)."""

    n_assets: int

    def __post_init__(self):
        if self.n_assets < 1:
            raise ValueError(f"need at least one asset, got {self.n_assets}")

    @property
    def denominator(self) -> int:
        return 2 * self.n_assets

    @property
    def step(self) -> Fraction:
        return Fraction(1, self.denominator)

    @property
    def levels(self) -> list[Fraction]:
        return [Fraction(i, self.denominator) for i in range(self.denominator + 1)]


@dataclass(frozen=True)
class Superarm:
    """Portfolio held as integer multiples of ``1 / denominator``."""

    numerators: tuple[int, ...]
    denominator: int

    def __post_init__(self):
        if sum(self.numerators) != self.denominator or min(self.numerators) < 0:
            raise ValueError(f"weights {self.numerators}/{self.denominator} do not form a portfolio")

    @property
    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(n, self.denominator) for n in self.numerators)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.numerators, dtype=float) / self.denominator

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.numerators) if n)


def count_superarms(n_assets: int, max_nonzero: int | None = None) -> int:
    """Number of grid portfolios: compositions of 2K into K parts (optionally at most n non-zero)."""
    total = 2 * n_assets
    if max_nonzero is None or max_nonzero >= n_assets:
        return comb(total + n_assets - 1, n_assets - 1)
    # choose which j assets are non-zero, then split 2K into j positive parts
    return sum(comb(n_assets, j) * comb(total - 1, j - 1) for j in range(1, max_nonzero + 1))


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_superarms(grid: WeightGrid | int, max_nonzero: int | None = None,
                        cap: int = DEFAULT_CAP) -> list[Superarm]:
    """All grid portfolios summing to exactly 1, in lexicographic order of weights."""
    if isinstance(grid, int):
        grid = WeightGrid(grid)
    if max_nonzero is not None and max_nonzero < 1:
        raise ValueError(f"max_nonzero must be >= 1, got {max_nonzero}")
    n = count_superarms(grid.n_assets, max_nonzero)
    if n > cap:
        raise EnumerationTooLarge(
            f"{grid.n_assets} assets give {n} superarms, above the cap of {cap}")
    d = grid.denominator
    out = []
    for nums in _compositions(d, grid.n_assets):
        if max_nonzero is not None and sum(1 for v in nums if v) > max_nonzero:
            continue
        out.append(Superarm(nums, d))
    return out


def superarm_matrix(superarms: Sequence[Superarm]) -> np.ndarray:
    return np.array([s.numerators for s in superarms], dtype=float) / superarms[0].denominator


def write_superarms_csv(superarms: Sequence[Superarm], dest=None,
                        asset_names: Sequence[str] | None = None) -> str | None:
    """One row per superarm, one column per asset weight.

    Returns the CSV text when ``dest`` is None, otherwise writes the file.
    """
    k = len(superarms[0].numerators) if superarms else len(asset_names or ())
    names = list(asset_names) if asset_names is not None else [f"w{i}" for i in range(k)]
    if len(names) != k:
        raise ValueError(f"{len(names)} asset names for {k} assets")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["superarm", *names])
    for i, s in enumerate(superarms):
        writer.writerow([i, *(repr(float(f)) for f in s.fractions)])
    if dest is None:
        return buf.getvalue()
    Path(dest).write_text(buf.getvalue(), encoding="utf-8")
    return None


class CADTS:
    """ADTS over every grid portfolio of ``n_assets`` assets.

    The reward of a superarm is the weighted sum of the asset rewards; the
    played superarm scores 1 only if no other superarm did better.
    """

    def __init__(self, n_assets: int, rng: np.random.Generator, gamma: float = 0.9,
                 window: int = 100, aggregation: str = "mean", smoothing: float = 1.0,
                 max_nonzero: int | None = None, cap: int = DEFAULT_CAP):
        self.n_assets = n_assets
        self.superarms = enumerate_superarms(WeightGrid(n_assets), max_nonzero, cap)
        self.matrix = superarm_matrix(self.superarms)
        self.policy = ADTS(len(self.superarms), rng, gamma=gamma, window=window,
                           aggregation=aggregation, smoothing=smoothing)

    def select(self) -> Superarm:
        return self.superarms[self.policy.select()]

    def portfolio_rewards(self, asset_rewards) -> np.ndarray:
        r = np.asarray(asset_rewards, dtype=float)
        if r.shape != (self.n_assets,):
            raise ValueError(f"expected {self.n_assets} asset rewards, got shape {r.shape}")
        return self.matrix @ r

    def step(self, asset_rewards, t: int = 0) -> tuple[Superarm, PullRecord]:
        rec = play(self.policy, self.portfolio_rewards(asset_rewards), t)
        return self.superarms[rec.chosen], rec


def cadts_step(cadts: CADTS, asset_rewards, t: int = 0) -> Superarm:
    return cadts.step(asset_rewards, t)[0]
