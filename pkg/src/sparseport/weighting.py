"""Holding-based stock weights, favoured-universe selection and alpha scores."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from sparseport._io import fmt_float, write_csv
from sparseport.marketdata import FundReport, Holding

WINSOR_BOUND = 3.0


@dataclass(frozen=True)
class WeightVector:
    entries: Mapping[str, float]
    as_of: date | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))
        vals = np.array(list(self.entries.values()), dtype=float)
        if vals.size:
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ValueError("weights must be finite and nonnegative")
            if abs(math.fsum(vals) - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {vals.sum()!r}, expected 1")

    @property
    def tickers(self) -> list[str]:
        return list(self.entries)

    def __getitem__(self, ticker: str) -> float:
        return self.entries[ticker]

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, ticker: str, default: float = 0.0) -> float:
        return self.entries.get(ticker, default)

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ("ticker", "weight"), ((t, fmt_float(w)) for t, w in self.entries.items()))


@dataclass(frozen=True)
class AlphaVector:
    entries: Mapping[str, float]
    as_of: date | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))

    def vector(self, tickers: Iterable[str]) -> np.ndarray:
        return np.array([self.entries[t] for t in tickers], dtype=float)

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ("ticker", "alpha"), ((t, fmt_float(a)) for t, a in self.entries.items()))


def _normalized(raw: Mapping[str, float], as_of: date | None, what: str) -> WeightVector:
    total = math.fsum(raw.values())
    if not total > 0:
        raise ValueError(f"total {what} over the universe is zero")
    return WeightVector({t: v / total for t, v in raw.items() if v > 0}, as_of)


def _aggregate(
    reports: Iterable[FundReport],
    universe: Iterable[str],
    value: Callable[[Holding], float],
) -> dict[str, float]:
    universe = set(universe)
    if not universe:
        raise ValueError("universe is empty")
    parts: dict[str, list[float]] = defaultdict(list)
    for report in reports:
        for h in report.holdings:
            if h.ticker in universe:
                parts[h.ticker].append(value(h))
    return {t: math.fsum(v) for t, v in parts.items()}


def weight_by_holding_mcap(reports: Iterable[FundReport], universe: Iterable[str], as_of: date | None = None) -> WeightVector:
    """Share of total fund holding market value held in each stock."""
    return _normalized(_aggregate(reports, universe, lambda h: h.market_value), as_of, "holding market value")


def weight_by_holding_count(reports: Iterable[FundReport], universe: Iterable[str], as_of: date | None = None) -> WeightVector:
    """Share of fund top-holding slots that each stock occupies."""
    return _normalized(_aggregate(reports, universe, lambda h: 1.0), as_of, "holding count")


def weight_by_weight_sum(reports: Iterable[FundReport], universe: Iterable[str], as_of: date | None = None) -> WeightVector:
    """Sum of in-fund weights of each stock, normalized across stocks."""
    return _normalized(_aggregate(reports, universe, lambda h: h.weight_in_fund), as_of, "in-fund weight")


WEIGHTING_METHODS = {
    "mcap": weight_by_holding_mcap,
    "count": weight_by_holding_count,
    "weight_sum": weight_by_weight_sum,
}


def select_top_fraction(weights: WeightVector, fraction: float) -> set[str]:
    """The ``ceil(fraction * n)`` heaviest tickers, ties broken by ticker."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if not len(weights):
        raise ValueError("weights are empty")
    k = math.ceil(fraction * len(weights) - 1e-12)
    ranked = sorted(weights.entries.items(), key=lambda kv: (-kv[1], kv[0]))
    return {t for t, _ in ranked[:k]}


def alpha_from_weights(weights: WeightVector, bound: float = WINSOR_BOUND) -> AlphaVector:
    """Standardize weights (sample std) and clip the scores to ``[-bound, bound]``."""
    tickers = weights.tickers
    vals = np.array([weights[t] for t in tickers], dtype=float)
    if vals.size < 2:
        raise ValueError("need at least two tickers to standardize")
    sd = vals.std(ddof=1)
    if not sd > 0:
        raise ValueError("weights have zero standard deviation")
    z = np.clip((vals - vals.mean()) / sd, -bound, bound)
    return AlphaVector(dict(zip(tickers, z.tolist())), weights.as_of)
