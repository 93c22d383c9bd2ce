"""Quarterly-rebalanced long-only backtest under A-share trading rules.

Trades fill at the day's close plus (buy) or minus (sell) a fixed per-share
slippage, in whole lots, with side-dependent commission. Suspended stocks
cannot trade, limit-up stocks cannot be bought and limit-down stocks cannot
be sold. Cash earns nothing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Mapping, Sequence

import numpy as np

from sparseport._io import fmt_date, fmt_float, write_csv
from sparseport.marketdata import InstrumentMeta, MarketData, PriceBar
from sparseport.screener import MIN_LISTED_DAYS, listed_long_enough
from sparseport.weighting import WeightVector

log = logging.getLogger(__name__)

BUY = "buy"
SELL = "sell"


class BacktestError(RuntimeError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    initial_cash: float = 100_000_000.0
    commission_buy: float = 0.0005
    commission_sell: float = 0.00015
    slippage: float = 0.01
    lot_size: int = 100
    min_listed_days: int = MIN_LISTED_DAYS

    def __post_init__(self):
        for name in ("initial_cash", "commission_buy", "commission_sell", "slippage"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.lot_size < 1:
            raise ValueError("lot_size must be at least 1")


@dataclass
class PortfolioState:
    date: date | None
    cash: float
    positions: dict[str, int] = field(default_factory=dict)

    def value(self, prices: Mapping[str, float]) -> float:
        return self.cash + math.fsum(n * prices[t] for t, n in self.positions.items())


@dataclass(frozen=True)
class TradeFill:
    date: date
    ticker: str
    side: str
    shares: int
    reference_price: float
    executed_price: float
    commission: float


@dataclass(frozen=True)
class Skip:
    date: date
    ticker: str
    side: str
    reason: str


@dataclass
class EquityCurve:
    dates: list[date]
    equity: np.ndarray
    cash: np.ndarray

    def __post_init__(self):
        self.equity = np.asarray(self.equity, dtype=float)
        self.cash = np.asarray(self.cash, dtype=float)

    def slice_from(self, start: date) -> "EquityCurve":
        k = next((i for i, d in enumerate(self.dates) if d >= start), len(self.dates))
        return EquityCurve(self.dates[k:], self.equity[k:], self.cash[k:])


def tradability(
    bar: PriceBar | None,
    meta: InstrumentMeta | None,
    as_of: date,
    side: str,
    min_listed_days: int = MIN_LISTED_DAYS,
) -> str | None:
    """None when the trade may happen, otherwise the blocking reason."""
    if bar is None or meta is None:
        return "no_data"
    if not listed_long_enough(meta.listing_date, as_of, min_listed_days):
        return "listed_too_recently"
    if bar.is_suspended:
        return "suspended"
    if side == BUY and bar.close >= bar.limit_up_price:
        return "limit_up"
    if side == SELL and bar.close <= bar.limit_down_price:
        return "limit_down"
    return None


@dataclass
class RebalanceResult:
    state: PortfolioState
    fills: list[TradeFill]
    skips: list[Skip]


def rebalance(
    state: PortfolioState,
    target: WeightVector,
    bars: Mapping[str, PriceBar],
    config: BacktestConfig,
    instruments: Mapping[str, InstrumentMeta],
    as_of: date,
    last_prices: Mapping[str, float] | None = None,
) -> RebalanceResult:
    """Trade ``state`` toward ``target`` at ``as_of`` closes.

    Target shares are ``floor(w * equity / close / lot) * lot``. Sells run
    first; buys are then scaled down together if their cost would overdraw
    cash. Blocked legs are skipped and their positions carried.
    """
    last_prices = last_prices or {}
    lot = config.lot_size
    fills: list[TradeFill] = []
    skips: list[Skip] = []
    positions = dict(state.positions)

    ref: dict[str, float] = {}
    for t in positions:
        if t in bars:
            ref[t] = bars[t].close
        elif t in last_prices:
            ref[t] = last_prices[t]
            skips.append(Skip(as_of, t, "hold", "no_data"))
        else:
            raise BacktestError(f"{as_of}: no price known for held ticker {t}")
    equity = state.cash + math.fsum(positions[t] * ref[t] for t in positions)
    if equity < 0:
        raise BacktestError(f"{as_of}: negative equity {equity}")

    desired: dict[str, int] = {}
    for t in sorted(set(positions) | set(target.tickers)):
        w = target.get(t)
        bar = bars.get(t)
        if bar is None or not bar.close > 0:
            continue
        desired[t] = int(math.floor(w * equity / bar.close / lot)) * lot

    cash = state.cash
    for t in sorted(desired):
        delta = desired[t] - positions.get(t, 0)
        if delta >= 0:
            continue
        bar = bars[t]
        reason = tradability(bar, instruments.get(t), as_of, SELL, config.min_listed_days)
        if reason:
            skips.append(Skip(as_of, t, SELL, reason))
            continue
        shares = -delta
        px = bar.close - config.slippage
        commission = config.commission_sell * shares * px
        cash += shares * px - commission
        positions[t] -= shares
        if positions[t] == 0:
            del positions[t]
        fills.append(TradeFill(as_of, t, SELL, shares, bar.close, px, commission))

    buys: dict[str, int] = {}
    for t in sorted(desired):
        delta = desired[t] - positions.get(t, 0)
        if delta <= 0:
            continue
        reason = tradability(bars[t], instruments.get(t), as_of, BUY, config.min_listed_days)
        if reason:
            skips.append(Skip(as_of, t, BUY, reason))
            continue
        buys[t] = delta

    def cost(t: str, shares: int) -> float:
        px = bars[t].close + config.slippage
        return shares * px + config.commission_buy * shares * px

    total = math.fsum(cost(t, s) for t, s in buys.items())
    if total > cash:
        factor = cash / total
        buys = {t: int(math.floor(factor * s / lot)) * lot for t, s in buys.items()}
        # guard against floating round-up: trim the largest leg one lot at a time
        while math.fsum(cost(t, s) for t, s in buys.items()) > cash:
            t_max = max(buys, key=lambda t: (cost(t, buys[t]), t))
            buys[t_max] -= lot
    for t, shares in buys.items():
        if shares <= 0:
            continue
        bar = bars[t]
        px = bar.close + config.slippage
        commission = config.commission_buy * shares * px
        cash -= shares * px + commission
        positions[t] = positions.get(t, 0) + shares
        fills.append(TradeFill(as_of, t, BUY, shares, bar.close, px, commission))

    if cash < 0:
        # floating dust only; the trim loop above keeps true cost within cash
        if cash < -1e-6:
            raise BacktestError(f"{as_of}: cash went negative ({cash})")
        cash = 0.0
    return RebalanceResult(PortfolioState(as_of, cash, positions), fills, skips)


WeightsProvider = Callable[[MarketData, date], "WeightVector | None"]


@dataclass
class BacktestResult:
    curve: EquityCurve
    fills: list[TradeFill]
    holdings: list[tuple[date, str, int, float]]
    skips: list[Skip]
    targets: dict[date, WeightVector]
    rebalanced: list[date]


def run_backtest(
    data: MarketData,
    schedule: Sequence[date],
    weights_provider: WeightsProvider,
    config: BacktestConfig | None = None,
) -> BacktestResult:
    """Simulate the strategy day by day over the price calendar.

    At each scheduled date the provider receives the market truncated at
    that date and returns target weights, or None to keep positions.
    """
    config = config or BacktestConfig()
    prices = data.prices
    sched = set(schedule)
    missing = sorted(sched - set(prices.dates))
    if missing:
        raise BacktestError(f"schedule dates not in calendar: {missing[:3]}")
    filled = prices.filled_close()
    state = PortfolioState(None, float(config.initial_cash), {})
    fills: list[TradeFill] = []
    skips: list[Skip] = []
    holdings: list[tuple[date, str, int, float]] = []
    targets: dict[date, WeightVector] = {}
    rebalanced: list[date] = []
    equity = np.empty(len(prices.dates))
    cash = np.empty(len(prices.dates))
    for i, d in enumerate(prices.dates):
        if d in sched:
            try:
                target = weights_provider(data.truncate(d), d)
            except Exception as exc:
                raise BacktestError(f"weights provider failed at {d}: {exc}") from exc
            if target is not None:
                last = {t: float(filled[i, prices.col[t]]) for t in state.positions}
                res = rebalance(state, target, prices.bars_on(d), config, data.instruments, d, last)
                state = res.state
                fills.extend(res.fills)
                skips.extend(res.skips)
                targets[d] = target
                rebalanced.append(d)
                marks_now = {t: float(filled[i, prices.col[t]]) for t in state.positions}
                value = state.value(marks_now)
                for t in sorted(state.positions):
                    n = state.positions[t]
                    holdings.append((d, t, n, n * marks_now[t] / value if value > 0 else 0.0))
        marks = math.fsum(n * float(filled[i, prices.col[t]]) for t, n in state.positions.items())
        cash[i] = state.cash
        equity[i] = state.cash + marks
    return BacktestResult(EquityCurve(list(prices.dates), equity, cash), fills, holdings, skips, targets, rebalanced)


def write_fills(fills: Sequence[TradeFill], path) -> None:
    rows = (
        (fmt_date(f.date), f.ticker, f.side, f.shares, fmt_float(f.reference_price), fmt_float(f.executed_price), fmt_float(f.commission))
        for f in fills
    )
    write_csv(path, ("date", "ticker", "side", "shares", "ref_price", "exec_price", "commission"), rows)


def write_equity(curve: EquityCurve, path) -> None:
    rows = ((fmt_date(d), fmt_float(e), fmt_float(c)) for d, e, c in zip(curve.dates, curve.equity, curve.cash))
    write_csv(path, ("date", "equity", "cash"), rows)


def write_holdings(holdings: Sequence[tuple[date, str, int, float]], path) -> None:
    rows = ((fmt_date(d), t, n, fmt_float(w)) for d, t, n, w in holdings)
    write_csv(path, ("date", "ticker", "shares", "weight"), rows)
