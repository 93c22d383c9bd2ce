"""Perturb everything a strategy could see only after a cutoff date."""

from __future__ import annotations

from dataclasses import replace
from datetime import date, timedelta

import numpy as np

from sparseport.marketdata import FundReport, Holding, IndexSeries, MarketData, PriceTable


def mutate_after(data: MarketData, cutoff: date, seed: int = 0) -> MarketData:
    """Copy of ``data`` with prices, index levels and reports after ``cutoff`` scrambled.

    Reports published after the cutoff get new market values and weights,
    and each fund also gains a restated report for the last quarter
    published before the cutoff but dated after it.
    """
    rng = np.random.default_rng(seed)
    p = data.prices
    late = np.array([d > cutoff for d in p.dates])
    shock = np.where(late[:, None], rng.uniform(0.5, 1.5, p.close.shape), 1.0)
    suspended = p.suspended.copy()
    suspended[late] = rng.random((int(late.sum()), len(p.tickers))) < 0.3
    present = p.present.copy()
    present[late] &= rng.random((int(late.sum()), len(p.tickers))) > 0.1
    close = np.where(present, p.close * shock, np.nan)
    prices = PriceTable(
        p.tickers,
        p.dates,
        close,
        np.where(present, p.prev_close * shock, np.nan),
        suspended & present,
        np.where(present, p.limit_up * shock, np.nan),
        np.where(present, p.limit_down * shock, np.nan),
        present,
    )

    levels = data.index.levels * np.array([rng.uniform(0.5, 1.5) if d > cutoff else 1.0 for d in data.index.dates])
    index = IndexSeries(data.index.dates, levels)

    reports = []
    for r in data.reports:
        if r.publish_date > cutoff:
            r = replace(r, holdings=tuple(_scramble(h, rng) for h in r.holdings))
        reports.append(r)
    published = [r for r in data.reports if r.publish_date <= cutoff]
    if published:
        last_q = max(r.quarter_end for r in published)
        for r in published:
            if r.quarter_end == last_q:
                holdings = tuple(_scramble(h, rng) for h in r.holdings)
                reports.append(FundReport(r.fund_id, last_q, cutoff + timedelta(days=1), holdings))
    return MarketData(data.instruments, prices, data.funds, reports, index)


def _scramble(h: Holding, rng: np.random.Generator) -> Holding:
    return Holding(h.ticker, h.shares, float(h.market_value * rng.uniform(0.1, 10.0)), float(rng.uniform(0.0, 0.2)))
