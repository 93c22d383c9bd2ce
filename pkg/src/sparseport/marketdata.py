"""Market data model, CSV ingestion, trading calendar helpers and a synthetic market.

File layout of a data directory::

    instruments.csv  ticker,listing_date,industry_code,board
    prices.csv       ticker,date,close,prev_close,is_suspended,limit_up,limit_down
    funds.csv        fund_id,name,category,is_open_ended,is_etf_like,is_excluded_type,list_date,share_class_suffix
    fund_reports.csv fund_id,quarter_end,publish_date,ticker,shares,market_value,weight_in_fund
    index.csv        date,level

Dates are ISO-8601, booleans 0/1, prices in CNY. Closes are assumed to be
pre-adjusted for corporate actions.
"""

from __future__ import annotations

import bisect
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from sparseport._io import (
    DataError,
    FieldParser,
    fmt_date,
    fmt_float,
    parse_date,
    read_csv,
    write_csv,
)

A_SHARE = "A-share"
OTHER_BOARD = "other"
FUND_CATEGORIES = ("Equity", "Hybrid", "other")
MAX_HOLDINGS = 10

PRICE_HEADER = ("ticker", "date", "close", "prev_close", "is_suspended", "limit_up", "limit_down")
REPORT_HEADER = ("fund_id", "quarter_end", "publish_date", "ticker", "shares", "market_value", "weight_in_fund")
FUND_HEADER = (
    "fund_id",
    "name",
    "category",
    "is_open_ended",
    "is_etf_like",
    "is_excluded_type",
    "list_date",
    "share_class_suffix",
)
INSTRUMENT_HEADER = ("ticker", "listing_date", "industry_code", "board")
INDEX_HEADER = ("date", "level")


@dataclass(frozen=True)
class InstrumentMeta:
    ticker: str
    listing_date: date
    industry_code: str
    board: str = A_SHARE

    def __post_init__(self):
        if self.board not in (A_SHARE, OTHER_BOARD):
            raise DataError(f"{self.ticker}: unknown board {self.board!r}")
        if not self.industry_code:
            raise DataError(f"{self.ticker}: empty industry code")


@dataclass(frozen=True)
class PriceBar:
    ticker: str
    date: date
    close: float
    prev_close: float
    is_suspended: bool
    limit_up_price: float
    limit_down_price: float


@dataclass(frozen=True)
class FundMeta:
    fund_id: str
    name: str
    category: str
    is_open_ended: bool
    is_etf_like: bool
    is_excluded_type: bool
    list_date: date
    share_class_suffix: str | None = None

    def __post_init__(self):
        if self.category not in FUND_CATEGORIES:
            raise DataError(f"fund {self.fund_id}: unknown category {self.category!r}")


@dataclass(frozen=True)
class Holding:
    ticker: str
    shares: int
    market_value: float
    weight_in_fund: float


@dataclass(frozen=True)
class FundReport:
    """One fund's disclosed top holdings for a quarter."""

    fund_id: str
    quarter_end: date
    publish_date: date
    holdings: tuple[Holding, ...]

    def __post_init__(self):
        if self.publish_date < self.quarter_end:
            raise DataError(f"fund {self.fund_id} {self.quarter_end}: publish_date before quarter_end")
        if len(self.holdings) > MAX_HOLDINGS:
            raise DataError(
                f"fund {self.fund_id} {self.quarter_end}: {len(self.holdings)} holdings, at most {MAX_HOLDINGS} allowed"
            )
        for h in self.holdings:
            if not 0.0 <= h.weight_in_fund <= 1.0:
                raise DataError(f"fund {self.fund_id} {self.quarter_end}: weight_in_fund {h.weight_in_fund} outside [0,1]")
            if h.market_value < 0:
                raise DataError(f"fund {self.fund_id} {self.quarter_end}: negative market_value for {h.ticker}")

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(h.ticker for h in self.holdings)


@dataclass(frozen=True)
class TradingCalendar:
    dates: tuple[date, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"trading calendar not strictly increasing at {a} -> {b}")

    def __len__(self) -> int:
        return len(self.dates)

    def __contains__(self, d: object) -> bool:
        i = self._search(d)  # type: ignore[arg-type]
        return i < len(self.dates) and self.dates[i] == d

    def _search(self, d: date) -> int:
        return bisect.bisect_left(self.dates, d)

    def first_on_or_after(self, d: date) -> date | None:
        i = self._search(d)
        return self.dates[i] if i < len(self.dates) else None


@dataclass(frozen=True)
class IndexSeries:
    dates: tuple[date, ...]
    levels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        levels = np.asarray(self.levels, dtype=float)
        object.__setattr__(self, "levels", levels)
        if len(levels) != len(self.dates):
            raise DataError("index dates and levels differ in length")
        if np.any(~(levels > 0)):
            raise DataError("index levels must be positive")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"index dates not strictly increasing at {a} -> {b}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSeries):
            return NotImplemented
        return self.dates == other.dates and np.array_equal(self.levels, other.levels)

    def truncate(self, as_of: date) -> "IndexSeries":
        k = sum(1 for d in self.dates if d <= as_of)
        return IndexSeries(self.dates[:k], self.levels[:k])

    def as_dict(self) -> dict[date, float]:
        return dict(zip(self.dates, self.levels.tolist()))


class PriceTable:
    """Daily bars stored as dense (dates x tickers) panels.

    ``present[t, j]`` marks whether a bar exists; other panels hold NaN (or
    False) where it does not.
    """

    def __init__(
        self,
        tickers: Sequence[str],
        dates: Sequence[date],
        close: np.ndarray,
        prev_close: np.ndarray,
        suspended: np.ndarray,
        limit_up: np.ndarray,
        limit_down: np.ndarray,
        present: np.ndarray,
    ):
        self.tickers = list(tickers)
        self.dates = list(dates)
        self.ordinals = np.array([d.toordinal() for d in self.dates], dtype=np.int64)
        self.close = close
        self.prev_close = prev_close
        self.suspended = suspended
        self.limit_up = limit_up
        self.limit_down = limit_down
        self.present = present
        self.col = {t: j for j, t in enumerate(self.tickers)}
        self._row = {d: i for i, d in enumerate(self.dates)}
        self._filled: np.ndarray | None = None

    @classmethod
    def from_bars(cls, bars: Iterable[PriceBar]) -> "PriceTable":
        bars = list(bars)
        tickers = sorted({b.ticker for b in bars})
        dates = sorted({b.date for b in bars})
        col = {t: j for j, t in enumerate(tickers)}
        row = {d: i for i, d in enumerate(dates)}
        shape = (len(dates), len(tickers))
        close = np.full(shape, np.nan)
        prev_close = np.full(shape, np.nan)
        limit_up = np.full(shape, np.nan)
        limit_down = np.full(shape, np.nan)
        suspended = np.zeros(shape, dtype=bool)
        present = np.zeros(shape, dtype=bool)
        for b in bars:
            i, j = row[b.date], col[b.ticker]
            if present[i, j]:
                raise DataError(f"duplicate bar for ({b.ticker}, {b.date})")
            present[i, j] = True
            close[i, j] = b.close
            prev_close[i, j] = b.prev_close
            suspended[i, j] = b.is_suspended
            limit_up[i, j] = b.limit_up_price
            limit_down[i, j] = b.limit_down_price
        return cls(tickers, dates, close, prev_close, suspended, limit_up, limit_down, present)

    def __len__(self) -> int:
        return int(self.present.sum())

    def bars(self) -> Iterator[PriceBar]:
        """Iterate bars sorted by (ticker, date)."""
        for j, t in enumerate(self.tickers):
            for i in np.flatnonzero(self.present[:, j]):
                yield self._make_bar(i, j)

    def _make_bar(self, i: int, j: int) -> PriceBar:
        return PriceBar(
            ticker=self.tickers[j],
            date=self.dates[i],
            close=float(self.close[i, j]),
            prev_close=float(self.prev_close[i, j]),
            is_suspended=bool(self.suspended[i, j]),
            limit_up_price=float(self.limit_up[i, j]),
            limit_down_price=float(self.limit_down[i, j]),
        )

    def row_of(self, d: date) -> int | None:
        return self._row.get(d)

    def bar(self, ticker: str, d: date) -> PriceBar | None:
        i = self._row.get(d)
        j = self.col.get(ticker)
        if i is None or j is None or not self.present[i, j]:
            return None
        return self._make_bar(i, j)

    def bars_on(self, d: date) -> dict[str, PriceBar]:
        i = self._row.get(d)
        if i is None:
            return {}
        return {self.tickers[j]: self._make_bar(i, j) for j in np.flatnonzero(self.present[i])}

    def filled_close(self) -> np.ndarray:
        """Closes carried forward over missing bars; NaN before a ticker's first bar."""
        if self._filled is None:
            filled = self.close.copy()
            for i in range(1, filled.shape[0]):
                gap = np.isnan(filled[i])
                filled[i, gap] = filled[i - 1, gap]
            self._filled = filled
        return self._filled

    def first_bar_index(self) -> np.ndarray:
        """Row of each ticker's first bar (len(dates) when it has none)."""
        any_bar = self.present.any(axis=0)
        first = np.argmax(self.present, axis=0)
        return np.where(any_bar, first, len(self.dates))

    def truncate(self, as_of: date) -> "PriceTable":
        k = int(np.searchsorted(self.ordinals, as_of.toordinal(), side="right"))
        return PriceTable(
            self.tickers,
            self.dates[:k],
            self.close[:k],
            self.prev_close[:k],
            self.suspended[:k],
            self.limit_up[:k],
            self.limit_down[:k],
            self.present[:k],
        )


@dataclass
class MarketData:
    """Everything the strategies consume, as loaded from a data directory."""

    instruments: dict[str, InstrumentMeta]
    prices: PriceTable
    funds: dict[str, FundMeta]
    reports: list[FundReport]
    index: IndexSeries

    @property
    def calendar(self) -> TradingCalendar:
        return TradingCalendar(tuple(self.prices.dates))

    def truncate(self, as_of: date) -> "MarketData":
        """View holding only information public on or before ``as_of``."""
        return MarketData(
            instruments=self.instruments,
            prices=self.prices.truncate(as_of),
            funds=self.funds,
            reports=[r for r in self.reports if r.publish_date <= as_of],
            index=self.index.truncate(as_of),
        )

    def latest_reports(self, as_of: date) -> list[FundReport]:
        """Reports of the most recent quarter published on or before ``as_of``."""
        available = [r for r in self.reports if r.publish_date <= as_of]
        if not available:
            return []
        latest = max(r.quarter_end for r in available)
        return sorted((r for r in available if r.quarter_end == latest), key=lambda r: r.fund_id)


# --------------------------------------------------------------------------- loaders


def load_price_table(path: str | Path) -> PriceTable:
    path = Path(path)
    bars: list[PriceBar] = []
    seen: dict[tuple[str, date], int] = {}
    for lineno, row in read_csv(path, PRICE_HEADER):
        f = FieldParser(path.name, lineno, row)
        bar = PriceBar(
            ticker=f.str("ticker"),
            date=f.date("date"),
            close=f.float("close"),
            prev_close=f.float("prev_close"),
            is_suspended=f.bool("is_suspended"),
            limit_up_price=f.float("limit_up"),
            limit_down_price=f.float("limit_down"),
        )
        if not bar.is_suspended:
            if not bar.close > 0:
                raise f.error("close", f"close must be positive on a trading day, got {bar.close}")
            if not bar.prev_close > 0:
                raise f.error("prev_close", f"prev_close must be positive on a trading day, got {bar.prev_close}")
            if not bar.limit_down_price <= bar.close <= bar.limit_up_price:
                raise f.error("close", f"close {bar.close} outside limits [{bar.limit_down_price}, {bar.limit_up_price}]")
        key = (bar.ticker, bar.date)
        if key in seen:
            raise DataError(f"{path.name} line {lineno}: duplicate bar for {key[0]} on {key[1]} (first at line {seen[key]})")
        seen[key] = lineno
        bars.append(bar)
    return PriceTable.from_bars(bars)


def write_price_table(table: PriceTable, path: str | Path) -> None:
    rows = (
        (
            b.ticker,
            fmt_date(b.date),
            fmt_float(b.close),
            fmt_float(b.prev_close),
            int(b.is_suspended),
            fmt_float(b.limit_up_price),
            fmt_float(b.limit_down_price),
        )
        for b in table.bars()
    )
    write_csv(path, PRICE_HEADER, rows)


def load_fund_reports(path: str | Path) -> list[FundReport]:
    """Group holding rows into reports keyed by (fund_id, quarter_end)."""
    path = Path(path)
    groups: dict[tuple[str, date], list[Holding]] = {}
    publish: dict[tuple[str, date], date] = {}
    first_line: dict[tuple[str, date], int] = {}
    for lineno, row in read_csv(path, REPORT_HEADER):
        f = FieldParser(path.name, lineno, row)
        key = (f.str("fund_id"), f.date("quarter_end"))
        pub = f.date("publish_date")
        weight = f.float("weight_in_fund")
        if not 0.0 <= weight <= 1.0:
            raise f.error("weight_in_fund", f"{weight} outside [0, 1]")
        mv = f.float("market_value")
        if mv < 0:
            raise f.error("market_value", f"negative market value {mv}")
        shares = f.int("shares")
        if shares < 0:
            raise f.error("shares", f"negative share count {shares}")
        if key not in groups:
            groups[key] = []
            publish[key] = pub
            first_line[key] = lineno
        elif publish[key] != pub:
            raise f.error("publish_date", f"differs from line {first_line[key]} of the same report")
        if pub < key[1]:
            raise f.error("publish_date", "publish_date precedes quarter_end")
        groups[key].append(Holding(f.str("ticker"), shares, mv, weight))
        if len(groups[key]) > MAX_HOLDINGS:
            raise DataError(
                f"{path.name} line {lineno}: report ({key[0]}, {key[1]}) has more than {MAX_HOLDINGS} holdings"
            )
    reports = [FundReport(k[0], k[1], publish[k], tuple(h)) for k, h in groups.items()]
    reports.sort(key=lambda r: (r.fund_id, r.quarter_end))
    return reports


def write_fund_reports(reports: Iterable[FundReport], path: str | Path) -> None:
    rows = (
        (
            r.fund_id,
            fmt_date(r.quarter_end),
            fmt_date(r.publish_date),
            h.ticker,
            h.shares,
            fmt_float(h.market_value),
            fmt_float(h.weight_in_fund),
        )
        for r in reports
        for h in r.holdings
    )
    write_csv(path, REPORT_HEADER, rows)


def load_funds(path: str | Path) -> dict[str, FundMeta]:
    path = Path(path)
    out: dict[str, FundMeta] = {}
    for lineno, row in read_csv(path, FUND_HEADER):
        f = FieldParser(path.name, lineno, row)
        category = f.str("category")
        if category not in FUND_CATEGORIES:
            raise f.error("category", f"expected one of {FUND_CATEGORIES}, got {category!r}")
        meta = FundMeta(
            fund_id=f.str("fund_id"),
            name=f.str("name"),
            category=category,
            is_open_ended=f.bool("is_open_ended"),
            is_etf_like=f.bool("is_etf_like"),
            is_excluded_type=f.bool("is_excluded_type"),
            list_date=f.date("list_date"),
            share_class_suffix=f.str("share_class_suffix", allow_empty=True) or None,
        )
        if meta.fund_id in out:
            raise f.error("fund_id", f"duplicate fund {meta.fund_id}")
        out[meta.fund_id] = meta
    return out


def write_funds(funds: Iterable[FundMeta], path: str | Path) -> None:
    rows = (
        (
            m.fund_id,
            m.name,
            m.category,
            int(m.is_open_ended),
            int(m.is_etf_like),
            int(m.is_excluded_type),
            fmt_date(m.list_date),
            m.share_class_suffix or "",
        )
        for m in funds
    )
    write_csv(path, FUND_HEADER, rows)


def load_instruments(path: str | Path) -> dict[str, InstrumentMeta]:
    path = Path(path)
    out: dict[str, InstrumentMeta] = {}
    for lineno, row in read_csv(path, INSTRUMENT_HEADER):
        f = FieldParser(path.name, lineno, row)
        board = f.str("board")
        if board not in (A_SHARE, OTHER_BOARD):
            raise f.error("board", f"expected {A_SHARE!r} or {OTHER_BOARD!r}, got {board!r}")
        meta = InstrumentMeta(f.str("ticker"), f.date("listing_date"), f.str("industry_code"), board)
        if meta.ticker in out:
            raise f.error("ticker", f"duplicate ticker {meta.ticker}")
        out[meta.ticker] = meta
    return out


def write_instruments(instruments: Iterable[InstrumentMeta], path: str | Path) -> None:
    rows = ((m.ticker, fmt_date(m.listing_date), m.industry_code, m.board) for m in instruments)
    write_csv(path, INSTRUMENT_HEADER, rows)


def load_index(path: str | Path) -> IndexSeries:
    path = Path(path)
    dates, levels = [], []
    for lineno, row in read_csv(path, INDEX_HEADER):
        f = FieldParser(path.name, lineno, row)
        d, level = f.date("date"), f.float("level")
        if not level > 0:
            raise f.error("level", f"index level must be positive, got {level}")
        if dates and d <= dates[-1]:
            raise f.error("date", "dates must be strictly increasing")
        dates.append(d)
        levels.append(level)
    return IndexSeries(tuple(dates), np.array(levels))


def write_index(index: IndexSeries, path: str | Path) -> None:
    write_csv(path, INDEX_HEADER, ((fmt_date(d), fmt_float(v)) for d, v in zip(index.dates, index.levels)))


CALENDAR_HEADER = ("date",)


def load_calendar(path: str | Path) -> TradingCalendar:
    fname = Path(path).name
    return TradingCalendar(tuple(FieldParser(fname, n, row).date("date") for n, row in read_csv(path, CALENDAR_HEADER)))


def write_calendar(calendar: TradingCalendar, path: str | Path) -> None:
    write_csv(path, CALENDAR_HEADER, ((fmt_date(d),) for d in calendar.dates))


DATA_FILES = ("instruments.csv", "prices.csv", "funds.csv", "fund_reports.csv", "index.csv")
CALENDAR_FILE = "calendar.csv"


def load_market_data(directory: str | Path) -> MarketData:
    directory = Path(directory)
    for name in DATA_FILES:
        if not (directory / name).exists():
            raise FileNotFoundError(f"{directory / name}: file not found")
    data = MarketData(
        instruments=load_instruments(directory / "instruments.csv"),
        prices=load_price_table(directory / "prices.csv"),
        funds=load_funds(directory / "funds.csv"),
        reports=load_fund_reports(directory / "fund_reports.csv"),
        index=load_index(directory / "index.csv"),
    )
    # the calendar file is optional; when present it must agree with the price dates
    if (directory / CALENDAR_FILE).exists():
        cal = load_calendar(directory / CALENDAR_FILE)
        if cal.dates != data.calendar.dates:
            raise DataError(f"{CALENDAR_FILE}: trading dates differ from the dates in prices.csv")
    return data


def write_market_data(data: MarketData, directory: str | Path) -> None:
    directory = Path(directory)
    write_instruments(sorted(data.instruments.values(), key=lambda m: m.ticker), directory / "instruments.csv")
    write_price_table(data.prices, directory / "prices.csv")
    write_funds(sorted(data.funds.values(), key=lambda m: m.fund_id), directory / "funds.csv")
    write_fund_reports(data.reports, directory / "fund_reports.csv")
    write_index(data.index, directory / "index.csv")
    write_calendar(data.calendar, directory / CALENDAR_FILE)


# --------------------------------------------------------------------------- calendar & returns


def quarter_ends_between(start: date, end: date) -> list[date]:
    out = []
    for year in range(start.year, end.year + 1):
        for month, day in ((3, 31), (6, 30), (9, 30), (12, 31)):
            q = date(year, month, day)
            if start <= q <= end:
                out.append(q)
    return out


def rebalance_schedule(calendar: TradingCalendar, quarter_ends: Sequence[date], offset_days: int = 16) -> list[date]:
    """First trading date on or after each ``quarter_end + offset_days``."""
    out = []
    for q in quarter_ends:
        target = q + timedelta(days=offset_days)
        d = calendar.first_on_or_after(target)
        if d is None:
            raise ValueError(f"calendar ends before {target} (quarter end {q} + {offset_days} days)")
        out.append(d)
    return out


@dataclass
class ReturnWindow:
    tickers: list[str]
    dates: list[date]
    values: np.ndarray
    """(tickers x days) daily log returns; ``dates`` are the return end dates."""
    flagged: np.ndarray
    """True where the day was suspended or had no bar (return forced to 0)."""


def log_returns(prices: PriceTable, tickers: Sequence[str], start: date, end: date) -> ReturnWindow:
    """Daily log returns of ``tickers`` over trading days in ``[start, end]``.

    Suspended or missing days carry the last close, so their return is 0
    and the entry is flagged.
    """
    lo = int(np.searchsorted(prices.ordinals, start.toordinal(), side="left"))
    hi = int(np.searchsorted(prices.ordinals, end.toordinal(), side="right"))
    cols = []
    for t in tickers:
        if t not in prices.col:
            raise KeyError(f"no prices for {t}")
        cols.append(prices.col[t])
    cols = np.array(cols, dtype=int)
    present = prices.present[lo:hi][:, cols]
    close = prices.close[lo:hi][:, cols]
    n_obs = present.sum(axis=0)
    if np.any(n_obs < 2):
        bad = [tickers[k] for k in np.flatnonzero(n_obs < 2)]
        raise ValueError(f"fewer than 2 observations in window for {bad}")
    suspended = prices.suspended[lo:hi][:, cols]
    live = present & ~suspended
    if np.any(close[live] <= 0):
        raise ValueError("nonpositive price in return window")
    # forward then backward fill so every cell has a usable close
    filled = prices.filled_close()[lo:hi][:, cols].copy()
    first_valid = np.argmax(~np.isnan(filled), axis=0)
    for k, i0 in enumerate(first_valid):
        filled[:i0, k] = filled[i0, k]
    if np.any(filled <= 0):
        raise ValueError("nonpositive price in return window")
    logp = np.log(filled)
    values = np.diff(logp, axis=0).T
    flagged = (~live[1:]).T
    values = np.where(flagged, 0.0, values)
    return ReturnWindow(list(tickers), prices.dates[lo + 1 : hi], values, flagged)


# --------------------------------------------------------------------------- synthetic market


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic market generator.

    Stock log returns follow ``beta_i * market_t + sector_t + eps_it`` and are
    clipped to the daily price limits. Sectors are assigned round-robin so
    every sector holds the same number of stocks. Each stock carries a base
    preference ``preference_decay ** rank`` where ``rank`` is its position
    inside its sector; funds' quarterly top-10 holdings are drawn from these
    preferences (perturbed by ``preference_noise`` each quarter), with every
    stock held by at least one eligible fund when slots allow. The index is
    the preference-weighted (normalized base preferences) daily simple
    return of all listed stocks plus Gaussian noise of std ``index_noise``.
    """

    n_stocks: int = 200
    n_funds: int = 40
    n_sectors: int = 10
    n_days: int = 1260
    start_date: date = date(2015, 1, 5)
    market_vol: float = 0.015
    sector_vol: float = 0.005
    idio_vol: float = 0.01
    beta_spread: float = 0.1
    drift: float = 0.0003
    index_noise: float = 0.0005
    suspend_prob: float = 0.0
    limit_pct: float = 0.10
    n_late_listings: int = 0
    n_ineligible_funds: int = 4
    preference_decay: float = 0.85
    preference_noise: float = 0.1
    report_delay_days: int = 15

    def validate(self) -> None:
        if self.n_stocks < 1:
            raise ValueError("n_stocks must be at least 1")
        if self.n_funds < 1:
            raise ValueError("n_funds must be at least 1")
        if self.n_sectors < 1:
            raise ValueError("n_sectors must be at least 1")
        if self.n_days < 2:
            raise ValueError("n_days must be at least 2")
        if not 0 <= self.n_ineligible_funds < self.n_funds:
            raise ValueError("n_ineligible_funds must leave at least one eligible fund")
        if not 0 <= self.n_late_listings <= self.n_stocks:
            raise ValueError("n_late_listings out of range")
        if not 0 < self.limit_pct < 1:
            raise ValueError("limit_pct must be in (0, 1)")
        if not 0 <= self.suspend_prob < 1:
            raise ValueError("suspend_prob must be in [0, 1)")
        if not 0 < self.preference_decay <= 1:
            raise ValueError("preference_decay must be in (0, 1]")
        for name in ("market_vol", "sector_vol", "idio_vol", "index_noise", "beta_spread", "preference_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.report_delay_days < 0:
            raise ValueError("report_delay_days must be nonnegative")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "SyntheticSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValueError(f"unknown generator key {key!r}")
            kind = kinds[key]
            try:
                if kind in ("int", int):
                    kwargs[key] = int(raw)
                elif kind in ("float", float):
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = parse_date(raw)
            except ValueError:
                raise ValueError(f"bad value for {key}: {raw!r}") from None
        spec = cls(**kwargs)
        spec.validate()
        return spec


@dataclass
class SyntheticMarket:
    data: MarketData
    index_weights: dict[str, float]
    eligible_funds: list[str] = field(default_factory=list)


def _weekdays(start: date, n: int) -> list[date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def generate_synthetic_market(spec: SyntheticSpec, seed: int) -> SyntheticMarket:
    """Build a deterministic synthetic market from ``spec`` and ``seed``."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n, s = spec.n_stocks, spec.n_sectors
    dates = _weekdays(spec.start_date, spec.n_days)
    width = len(str(n - 1))
    tickers = [f"S{j:0{width}d}" for j in range(n)]
    sector_of = np.arange(n) % s
    sector_names = [f"IND{k:02d}" for k in range(s)]
    rank = np.arange(n) // s
    base_pref = spec.preference_decay ** rank.astype(float)

    # listing: late listings are the highest-numbered tickers
    first_row = np.zeros(n, dtype=int)
    late = np.arange(n - spec.n_late_listings, n)
    if len(late):
        first_row[late] = rng.integers(1, max(2, spec.n_days // 2), size=len(late))
    instruments = {}
    for j, t in enumerate(tickers):
        if first_row[j] == 0:
            listing = spec.start_date - timedelta(days=365 + int(rng.integers(0, 2000)))
        else:
            listing = dates[first_row[j]]
        instruments[t] = InstrumentMeta(t, listing, sector_names[sector_of[j]], A_SHARE)

    # prices
    T = len(dates)
    betas = 1.0 + spec.beta_spread * rng.standard_normal(n)
    market = spec.market_vol * rng.standard_normal(T)
    sector_shock = spec.sector_vol * rng.standard_normal((T, s))
    idio = spec.idio_vol * rng.standard_normal((T, n))
    log_ret = spec.drift + betas[None, :] * market[:, None] + sector_shock[:, sector_of] + idio
    suspend_draw = rng.random((T, n)) < spec.suspend_prob
    start_px = np.round(rng.uniform(5.0, 60.0, size=n), 2)

    shape = (T, n)
    close = np.full(shape, np.nan)
    prev_close = np.full(shape, np.nan)
    limit_up = np.full(shape, np.nan)
    limit_down = np.full(shape, np.nan)
    suspended = np.zeros(shape, dtype=bool)
    present = np.zeros(shape, dtype=bool)
    last = start_px.copy()
    for i in range(T):
        live = first_row <= i
        prev = last.copy()
        up = np.round(prev * (1 + spec.limit_pct), 2)
        down = np.maximum(np.round(prev * (1 - spec.limit_pct), 2), 0.01)
        raw = np.round(prev * np.exp(log_ret[i]), 2)
        new = np.clip(raw, down, up)
        susp = suspend_draw[i] & (first_row < i)
        new = np.where(susp, prev, new)
        close[i, live] = new[live]
        prev_close[i, live] = prev[live]
        limit_up[i, live] = up[live]
        limit_down[i, live] = down[live]
        suspended[i, live] = susp[live]
        present[i, live] = True
        last = np.where(live, new, last)
    prices = PriceTable(tickers, dates, close, prev_close, suspended, limit_up, limit_down, present)

    # index: preference-weighted simple return of listed stocks
    index_weights = base_pref / base_pref.sum()
    levels = np.empty(T)
    levels[0] = 1000.0
    noise = spec.index_noise * rng.standard_normal(T)
    for i in range(1, T):
        live = present[i] & present[i - 1]
        w = np.where(live, index_weights, 0.0)
        stock_ret = np.where(live, close[i] / np.where(live, close[i - 1], 1.0) - 1.0, 0.0)
        r = float(w @ stock_ret / w.sum()) + noise[i]
        levels[i] = levels[i - 1] * (1.0 + r)
    index = IndexSeries(tuple(dates), levels)

    funds, eligible = _synthetic_funds(spec, rng, dates[0])
    reports = _synthetic_reports(spec, rng, dates, prices, base_pref, funds, eligible, tickers)

    data = MarketData(instruments, prices, {f.fund_id: f for f in funds}, reports, index)
    return SyntheticMarket(data, dict(zip(tickers, index_weights.tolist())), eligible)


def _synthetic_funds(spec: SyntheticSpec, rng: np.random.Generator, first_day: date) -> tuple[list[FundMeta], list[str]]:
    funds: list[FundMeta] = []
    eligible: list[str] = []
    n_elig = spec.n_funds - spec.n_ineligible_funds
    for k in range(n_elig):
        fid = f"F{k:03d}"
        category = "Equity" if k % 2 == 0 else "Hybrid"
        listed = first_day - timedelta(days=200 + int(rng.integers(0, 3000)))
        funds.append(FundMeta(fid, f"Fund {k:03d} A", category, True, False, False, listed, "A"))
        eligible.append(fid)
    # each ineligible fund trips one screening rule
    kinds = ("etf", "share_class", "excluded_type", "closed", "category", "young")
    for k in range(spec.n_ineligible_funds):
        fid = f"F{n_elig + k:03d}"
        kind = kinds[k % len(kinds)]
        listed = first_day - timedelta(days=400)
        if kind == "etf":
            funds.append(FundMeta(fid, f"ETF Link {k:03d}", "Equity", True, True, False, listed, None))
        elif kind == "share_class":
            twin = funds[k % n_elig]
            funds.append(FundMeta(fid, twin.name[:-1] + "C", twin.category, True, False, False, twin.list_date, "C"))
        elif kind == "excluded_type":
            funds.append(FundMeta(fid, f"QDII {k:03d}", "Equity", True, False, True, listed, None))
        elif kind == "closed":
            funds.append(FundMeta(fid, f"Closed {k:03d}", "Hybrid", False, False, False, listed, None))
        elif kind == "category":
            funds.append(FundMeta(fid, f"Bond {k:03d}", "other", True, False, False, listed, None))
        else:
            young = first_day + timedelta(days=int(rng.integers(0, 3000)))
            funds.append(FundMeta(fid, f"New {k:03d}", "Equity", True, False, False, young, None))
    return funds, eligible


def _apportion(total: int, weights: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Integer counts in [lo, hi] summing to ``total``, roughly proportional to weights."""
    counts = np.full(len(weights), lo, dtype=int)
    remaining = total - counts.sum()
    while remaining > 0:
        room = counts < hi
        if not room.any():
            break
        share = np.where(room, weights, 0.0)
        ideal = share / share.sum() * remaining
        add = np.minimum(np.floor(ideal).astype(int), hi - counts)
        if add.sum() == 0:
            # hand out single slots by largest fractional desire
            order = np.lexsort((np.arange(len(weights)), -ideal))
            for j in order:
                if room[j] and remaining > 0:
                    counts[j] += 1
                    remaining -= 1
            continue
        counts += add
        remaining -= int(add.sum())
    return counts


def _synthetic_reports(
    spec: SyntheticSpec,
    rng: np.random.Generator,
    dates: list[date],
    prices: PriceTable,
    base_pref: np.ndarray,
    funds: list[FundMeta],
    eligible: list[str],
    tickers: list[str],
) -> list[FundReport]:
    reports: list[FundReport] = []
    n = len(tickers)
    n_elig = len(eligible)
    by_id = {f.fund_id: f for f in funds}
    filled = prices.filled_close()
    for q in quarter_ends_between(dates[0], dates[-1]):
        publish = q + timedelta(days=spec.report_delay_days)
        row = int(np.searchsorted(prices.ordinals, q.toordinal(), side="right")) - 1
        if row < 0 or publish > dates[-1]:
            continue
        px = filled[row]
        listed = prices.present[: row + 1].any(axis=0)
        pref = base_pref * np.exp(spec.preference_noise * rng.standard_normal(n))
        pref = np.where(listed, pref, 0.0)
        n_listed = int(listed.sum())
        slots = MAX_HOLDINGS * n_elig
        lo = 1 if n_listed <= slots else 0
        counts = np.zeros(n, dtype=int)
        counts[listed] = _apportion(min(slots, n_listed * n_elig), pref[listed], lo, n_elig)
        # deal stocks (most popular first) round-robin so no fund holds one twice
        order = np.lexsort((np.arange(n), -pref))
        holdings: list[list[int]] = [[] for _ in range(n_elig)]
        cursor = 0
        for j in order:
            for _ in range(counts[j]):
                holdings[cursor % n_elig].append(int(j))
                cursor += 1
        aum = np.exp(0.2 * rng.standard_normal(n_elig)) * 2e9
        for k, fid in enumerate(eligible):
            held = holdings[k][:MAX_HOLDINGS]
            if not held or by_id[fid].list_date > q:
                continue
            top_share = rng.uniform(0.35, 0.65)
            raw = np.array([pref[j] / counts[j] for j in held]) * np.exp(0.05 * rng.standard_normal(len(held)))
            weights = raw / raw.sum() * top_share
            reports.append(_make_report(fid, q, publish, held, weights, aum[k], px, tickers))
        # ineligible funds (other than share-class twins) hold preference draws
        for f in funds:
            if f.fund_id in eligible or f.list_date > q:
                continue
            if f.share_class_suffix == "C":
                twin = next(
                    (r for r in reversed(reports) if r.quarter_end == q and by_id[r.fund_id].name[:-1] == f.name[:-1]),
                    None,
                )
                if twin is not None:
                    reports.append(FundReport(f.fund_id, q, publish, twin.holdings))
                continue
            p = pref / pref.sum()
            k_held = min(MAX_HOLDINGS, n_listed)
            held = [int(j) for j in rng.choice(n, size=k_held, replace=False, p=p)]
            weights = rng.dirichlet(np.ones(k_held)) * 0.5
            reports.append(_make_report(f.fund_id, q, publish, held, weights, 1e9, px, tickers))
    reports.sort(key=lambda r: (r.fund_id, r.quarter_end))
    return reports


def _make_report(fid, q, publish, held, weights, aum, px, tickers) -> FundReport:
    hs = []
    for j, w in zip(held, weights):
        price = float(px[j])
        shares = max(100, int(round(w * aum / price / 100.0)) * 100)
        mv = round(shares * price, 2)
        hs.append(Holding(tickers[j], shares, mv, float(round(mv / aum, 10))))
    hs.sort(key=lambda h: -h.market_value)
    return FundReport(fid, q, publish, tuple(hs))
