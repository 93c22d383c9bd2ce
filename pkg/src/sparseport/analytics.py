"""Performance statistics and diagnostic series for equity curves."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import date
from typing import Mapping, Sequence

import numpy as np

from sparseport.backtest import EquityCurve
from sparseport.marketdata import IndexSeries

TRADING_DAYS = 252
CORR_WINDOW = 63


@dataclass(frozen=True)
class PerformanceReport:
    total_return: float
    annualized_vol: float
    sharpe: float | None
    max_drawdown: float
    start: date
    end: date

    def as_dict(self) -> dict:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["end"] = self.end.isoformat()
        return d


def max_drawdown(values: np.ndarray) -> float:
    """Largest peak-to-trough decline as a fraction of the peak."""
    v = np.asarray(values, dtype=float)
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak, initial=0.0))


def performance(dates: Sequence[date], values: np.ndarray) -> PerformanceReport:
    """Total return, log-return volatility/Sharpe (zero rate, 252 days) and drawdown, in percent."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two points")
    if np.any(v <= 0):
        raise ValueError("values must be positive")
    logr = np.diff(np.log(v))
    sd = float(logr.std(ddof=1)) if logr.size > 1 else 0.0
    sharpe = float(logr.mean() / sd * np.sqrt(TRADING_DAYS)) if sd > 0 else None
    return PerformanceReport(
        total_return=float((v[-1] / v[0] - 1.0) * 100.0),
        annualized_vol=sd * np.sqrt(TRADING_DAYS) * 100.0,
        sharpe=sharpe,
        max_drawdown=max_drawdown(v) * 100.0,
        start=dates[0],
        end=dates[-1],
    )


def curve_performance(curve: EquityCurve) -> PerformanceReport:
    return performance(curve.dates, curve.equity)


def simple_returns(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[1:] / v[:-1] - 1.0


def rolling_correlation(a: np.ndarray, b: np.ndarray, window: int = CORR_WINDOW) -> tuple[np.ndarray, float | None]:
    """Pearson correlation over each trailing window, and the median of the defined ones.

    Entry ``k`` covers ``a[k : k + window]``; windows where either series is
    flat are NaN.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("series must be aligned")
    if a.size < window:
        raise ValueError(f"need at least {window} observations")
    wa = np.lib.stride_tricks.sliding_window_view(a, window)
    wb = np.lib.stride_tricks.sliding_window_view(b, window)
    da = wa - wa.mean(axis=1, keepdims=True)
    db = wb - wb.mean(axis=1, keepdims=True)
    sa = np.sqrt(np.sum(da * da, axis=1))
    sb = np.sqrt(np.sum(db * db, axis=1))
    # centring a constant window can leave rounding dust instead of exact zeros
    tiny = 1e-12 * np.sqrt(window)
    flat = (sa <= tiny * np.abs(wa).max(axis=1)) | (sb <= tiny * np.abs(wb).max(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(flat, np.nan, np.sum(da * db, axis=1) / np.where(flat, 1.0, sa * sb))
    corr = np.clip(corr, -1.0, 1.0)
    defined = corr[~np.isnan(corr)]
    median = float(np.median(defined)) if defined.size else None
    return corr, median


def align(curve: EquityCurve, index: IndexSeries) -> tuple[list[date], np.ndarray, np.ndarray]:
    """Portfolio and benchmark levels on their common dates."""
    levels = index.as_dict()
    common = [(d, e) for d, e in zip(curve.dates, curve.equity) if d in levels]
    if len(common) < 2:
        raise ValueError("portfolio and benchmark share fewer than two dates")
    dates = [d for d, _ in common]
    return dates, np.array([e for _, e in common]), np.array([levels[d] for d in dates])


def excess_curve(curve: EquityCurve, benchmark: IndexSeries) -> tuple[list[date], np.ndarray]:
    """Cumulative sum of daily (portfolio - benchmark) simple returns."""
    dates, port, bench = align(curve, benchmark)
    diff = simple_returns(port) - simple_returns(bench)
    return dates, np.concatenate([[0.0], np.cumsum(diff)])


def industry_exposure_series(
    holdings: Sequence[tuple[date, str, int, float]],
    sector_of: Mapping[str, str],
    sectors: Sequence[str],
    prices: Mapping[tuple[date, str], float] | None = None,
    dates: Sequence[date] | None = None,
) -> tuple[list[date], np.ndarray, np.ndarray]:
    """Value-weighted sector fractions and holding counts per date.

    ``holdings`` rows are ``(date, ticker, shares, weight)``. With ``prices``
    the value is ``shares * price``, otherwise the recorded weight is used.
    Dates listed in ``dates`` without holdings come out as zero rows.
    """
    col = {s: k for k, s in enumerate(sectors)}
    by_date: dict[date, list[tuple[str, float]]] = {}
    for d, t, n, w in holdings:
        if t not in sector_of:
            raise KeyError(f"{t} has no sector")
        value = n * prices[(d, t)] if prices is not None else w
        by_date.setdefault(d, []).append((t, value))
    out_dates = sorted(set(by_date) | set(dates or ()))
    expo = np.zeros((len(out_dates), len(sectors)))
    counts = np.zeros(len(out_dates), dtype=int)
    for i, d in enumerate(out_dates):
        rows = [(t, v) for t, v in by_date.get(d, []) if v > 0]
        counts[i] = len(rows)
        total = sum(v for _, v in rows)
        for t, v in rows:
            expo[i, col[sector_of[t]]] += v / total
    return out_dates, expo, counts
