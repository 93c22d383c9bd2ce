from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparseport._io import DataError
from sparseport.marketdata import (
    CALENDAR_FILE,
    DATA_FILES,
    FundReport,
    Holding,
    IndexSeries,
    PriceBar,
    PriceTable,
    SyntheticSpec,
    TradingCalendar,
    generate_synthetic_market,
    load_fund_reports,
    load_market_data,
    load_price_table,
    log_returns,
    quarter_ends_between,
    rebalance_schedule,
    write_fund_reports,
    write_market_data,
    write_price_table,
)

PRICE_HEADER = "ticker,date,close,prev_close,is_suspended,limit_up,limit_down\n"
REPORT_HEADER = "fund_id,quarter_end,publish_date,ticker,shares,market_value,weight_in_fund\n"


def _write(path, text):
    path.write_text(text)
    return path


# ------------------------------------------------------------------ price table


def test_three_row_price_file_parses_in_order(tmp_path):
    p = _write(
        tmp_path / "prices.csv",
        PRICE_HEADER
        + "B,2020-01-02,10.5,10.0,0,11.0,9.0\n"
        + "A,2020-01-03,20.0,20.0,0,22.0,18.0\n"
        + "A,2020-01-02,20.0,19.5,0,21.45,17.55\n",
    )
    bars = list(load_price_table(p).bars())
    assert [(b.ticker, b.date) for b in bars] == [
        ("A", date(2020, 1, 2)),
        ("A", date(2020, 1, 3)),
        ("B", date(2020, 1, 2)),
    ]
    assert bars[2] == PriceBar("B", date(2020, 1, 2), 10.5, 10.0, False, 11.0, 9.0)


def test_nonpositive_close_names_the_line(tmp_path):
    p = _write(tmp_path / "prices.csv", PRICE_HEADER + "A,2020-01-02,10,10,0,11,9\nA,2020-01-03,0,10,0,11,9\n")
    with pytest.raises(DataError, match=r"prices.csv line 3, column 'close'"):
        load_price_table(p)


def test_suspended_bar_may_carry_zero_close(tmp_path):
    p = _write(tmp_path / "prices.csv", PRICE_HEADER + "A,2020-01-02,0,10,1,11,9\n")
    (bar,) = load_price_table(p).bars()
    assert bar.is_suspended


@pytest.mark.parametrize(
    "row, column",
    [
        ("A,2020-13-02,10,10,0,11,9", "date"),
        ("A,2020-01-02,ten,10,0,11,9", "close"),
        ("A,2020-01-02,10,10,2,11,9", "is_suspended"),
        ("A,2020-01-02,12,10,0,11,9", "close"),
    ],
)
def test_malformed_price_rows_are_located(tmp_path, row, column):
    p = _write(tmp_path / "prices.csv", PRICE_HEADER + row + "\n")
    with pytest.raises(DataError, match=rf"line 2, column '{column}'"):
        load_price_table(p)


def test_duplicate_bar_rejected(tmp_path):
    p = _write(tmp_path / "prices.csv", PRICE_HEADER + "A,2020-01-02,10,10,0,11,9\nA,2020-01-02,10,10,0,11,9\n")
    with pytest.raises(DataError, match="duplicate"):
        load_price_table(p)


def test_wrong_header_and_field_count(tmp_path):
    p = _write(tmp_path / "prices.csv", "ticker,date,close\nA,2020-01-02,1\n")
    with pytest.raises(DataError, match="line 1"):
        load_price_table(p)
    p = _write(tmp_path / "prices.csv", PRICE_HEADER + "A,2020-01-02,10,10,0,11\n")
    with pytest.raises(DataError, match="line 2: expected 7 fields"):
        load_price_table(p)


prices_st = st.floats(min_value=0.01, max_value=1e4, allow_nan=False, allow_infinity=False)


@st.composite
def price_tables(draw):
    tickers = draw(st.lists(st.text("ABCDEFGH", min_size=1, max_size=4), min_size=1, max_size=4, unique=True))
    start = date(2019, 1, 1)
    bars = []
    for t in tickers:
        offsets = draw(st.lists(st.integers(0, 30), min_size=1, max_size=6, unique=True))
        for off in offsets:
            close = draw(prices_st)
            suspended = draw(st.booleans())
            bars.append(PriceBar(t, start + timedelta(days=off), close, draw(prices_st), suspended, close * 1.1, close * 0.9))
    return PriceTable.from_bars(bars)


@given(price_tables())
@settings(max_examples=40, deadline=None)
def test_price_table_round_trip(tmp_path_factory, table):
    path = tmp_path_factory.mktemp("rt") / "prices.csv"
    write_price_table(table, path)
    again = load_price_table(path)
    assert list(again.bars()) == list(table.bars())


# ------------------------------------------------------------------ fund reports


def _report_rows(n, fund="F1", weight="0.05"):
    return "".join(f"{fund},2020-03-31,2020-04-15,S{k:02d},100,1000.0,{weight}\n" for k in range(n))


def test_ten_holdings_make_one_report(tmp_path):
    p = _write(tmp_path / "r.csv", REPORT_HEADER + _report_rows(10))
    (rep,) = load_fund_reports(p)
    assert len(rep.holdings) == 10
    assert rep.quarter_end == date(2020, 3, 31)


def test_eleven_holdings_rejected(tmp_path):
    p = _write(tmp_path / "r.csv", REPORT_HEADER + _report_rows(11))
    with pytest.raises(DataError, match="more than 10 holdings"):
        load_fund_reports(p)


def test_weight_outside_unit_interval_rejected(tmp_path):
    p = _write(tmp_path / "r.csv", REPORT_HEADER + _report_rows(1, weight="1.5"))
    with pytest.raises(DataError, match="column 'weight_in_fund'"):
        load_fund_reports(p)


def test_inconsistent_publish_date_rejected(tmp_path):
    text = REPORT_HEADER + "F1,2020-03-31,2020-04-15,A,1,1.0,0.1\nF1,2020-03-31,2020-04-16,B,1,1.0,0.1\n"
    with pytest.raises(DataError, match="line 3, column 'publish_date'"):
        load_fund_reports(_write(tmp_path / "r.csv", text))


def test_report_invariants():
    h = Holding("A", 100, 10.0, 0.1)
    with pytest.raises(DataError):
        FundReport("F", date(2020, 3, 31), date(2020, 3, 30), (h,))
    with pytest.raises(DataError):
        FundReport("F", date(2020, 3, 31), date(2020, 4, 15), (h,) * 11)
    with pytest.raises(DataError):
        FundReport("F", date(2020, 3, 31), date(2020, 4, 15), (Holding("A", 1, -1.0, 0.1),))


@st.composite
def report_sets(draw):
    reports = []
    funds = draw(st.lists(st.text("FGH", min_size=1, max_size=3), min_size=1, max_size=4, unique=True))
    for fid in sorted(funds):
        quarters = draw(st.lists(st.sampled_from([date(2020, 3, 31), date(2020, 6, 30), date(2020, 9, 30)]), min_size=1, max_size=3, unique=True))
        for q in sorted(quarters):
            n = draw(st.integers(1, 10))
            holdings = tuple(
                Holding(
                    f"T{k}",
                    draw(st.integers(0, 10**7)),
                    draw(st.floats(0, 1e9, allow_nan=False)),
                    draw(st.floats(0, 1, allow_nan=False)),
                )
                for k in range(n)
            )
            reports.append(FundReport(fid, q, q + timedelta(days=draw(st.integers(0, 40))), holdings))
    return reports


@given(report_sets())
@settings(max_examples=40, deadline=None)
def test_fund_reports_round_trip(tmp_path_factory, reports):
    path = tmp_path_factory.mktemp("rt") / "fund_reports.csv"
    write_fund_reports(reports, path)
    assert load_fund_reports(path) == reports


# ------------------------------------------------------------------ calendar and schedule


def test_calendar_must_increase():
    with pytest.raises(DataError):
        TradingCalendar((date(2020, 1, 2), date(2020, 1, 2)))


def test_schedule_on_the_day():
    cal = TradingCalendar((date(2020, 4, 15), date(2020, 4, 16), date(2020, 4, 17)))
    assert rebalance_schedule(cal, [date(2020, 3, 31)]) == [date(2020, 4, 16)]


def test_schedule_rolls_forward():
    cal = TradingCalendar((date(2020, 4, 15), date(2020, 4, 17)))
    assert rebalance_schedule(cal, [date(2020, 3, 31)]) == [date(2020, 4, 17)]


def test_schedule_needs_enough_calendar():
    cal = TradingCalendar((date(2020, 4, 1), date(2020, 4, 10)))
    with pytest.raises(ValueError):
        rebalance_schedule(cal, [date(2020, 3, 31)])


@given(
    st.lists(st.integers(0, 800), min_size=1, max_size=120, unique=True),
    st.lists(st.integers(0, 700), min_size=1, max_size=6, unique=True),
    st.integers(0, 30),
)
def test_schedule_matches_linear_scan(day_offsets, q_offsets, offset):
    base = date(2019, 1, 1)
    cal = TradingCalendar(tuple(base + timedelta(days=k) for k in sorted(day_offsets)))
    quarters = [base + timedelta(days=k) for k in sorted(q_offsets)]
    expected = []
    for q in quarters:
        hit = None
        for d in cal.dates:  # linear scan oracle
            if d >= q + timedelta(days=offset):
                hit = d
                break
        expected.append(hit)
    if None in expected:
        with pytest.raises(ValueError):
            rebalance_schedule(cal, quarters, offset)
        return
    got = rebalance_schedule(cal, quarters, offset)
    assert got == expected
    assert all(a <= b for a, b in zip(got, got[1:]))


def test_quarter_ends_between():
    assert quarter_ends_between(date(2020, 2, 1), date(2020, 12, 31)) == [
        date(2020, 3, 31),
        date(2020, 6, 30),
        date(2020, 9, 30),
        date(2020, 12, 31),
    ]


# ------------------------------------------------------------------ returns


def _table(ticker, closes, suspended=None, start=date(2020, 1, 1)):
    suspended = suspended or [False] * len(closes)
    bars = [
        PriceBar(ticker, start + timedelta(days=k), c, c, s, c * 1.1, c * 0.9)
        for k, (c, s) in enumerate(zip(closes, suspended))
    ]
    return PriceTable.from_bars(bars)


def test_constant_prices_give_zero_returns():
    t = _table("A", [10.0] * 5)
    w = log_returns(t, ["A"], t.dates[0], t.dates[-1])
    assert np.all(w.values == 0.0)


def test_single_log_return():
    t = _table("A", [100.0, 110.0])
    w = log_returns(t, ["A"], t.dates[0], t.dates[-1])
    assert w.values.shape == (1, 1)
    assert w.values[0, 0] == pytest.approx(math.log(1.1), abs=1e-15)


def test_suspended_day_contributes_zero_and_is_flagged():
    t = _table("A", [10.0, 11.0, 11.0, 12.1], suspended=[False, False, True, False])
    w = log_returns(t, ["A"], t.dates[0], t.dates[-1])
    assert w.values[0, 1] == 0.0
    assert w.flagged[0].tolist() == [False, True, False]
    # the carried close means the day after a suspension holds the full move
    assert w.values[0, 2] == pytest.approx(math.log(12.1 / 11.0))


def test_too_few_observations():
    t = _table("A", [10.0])
    with pytest.raises(ValueError):
        log_returns(t, ["A"], t.dates[0], t.dates[-1])


@given(st.lists(st.floats(0.5, 500.0), min_size=2, max_size=60))
def test_cumulative_log_returns_reconstruct_price_ratio(closes):
    t = _table("A", closes)
    w = log_returns(t, ["A"], t.dates[0], t.dates[-1])
    ratio = math.exp(math.fsum(w.values[0]))
    assert ratio == pytest.approx(closes[-1] / closes[0], rel=1e-12)


# ------------------------------------------------------------------ synthetic market


def test_generation_is_deterministic(tmp_path):
    spec = SyntheticSpec(n_stocks=20, n_funds=6, n_sectors=4, n_days=200, n_ineligible_funds=2, suspend_prob=0.02)
    for k in (1, 2):
        write_market_data(generate_synthetic_market(spec, 5).data, tmp_path / str(k))
    for name in (*DATA_FILES, CALENDAR_FILE):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()
    write_market_data(generate_synthetic_market(spec, 6).data, tmp_path / "3")
    assert (tmp_path / "1" / "prices.csv").read_bytes() != (tmp_path / "3" / "prices.csv").read_bytes()


def test_generated_data_round_trips_through_loaders(tmp_path, small_market):
    write_market_data(small_market.data, tmp_path)
    data = load_market_data(tmp_path)
    assert list(data.prices.bars()) == list(small_market.data.prices.bars())
    assert data.reports == small_market.data.reports
    assert data.funds == small_market.data.funds
    assert data.instruments == small_market.data.instruments
    assert data.index == small_market.data.index


def test_zero_noise_index_is_the_disclosed_combination():
    spec = SyntheticSpec(n_stocks=30, n_funds=6, n_sectors=3, n_days=120, n_ineligible_funds=1, index_noise=0.0, suspend_prob=0.05)
    m = generate_synthetic_market(spec, 3)
    prices, levels = m.data.prices, m.data.index.levels
    w = np.array([m.index_weights[t] for t in prices.tickers])
    for i in range(1, len(prices.dates)):
        live = prices.present[i] & prices.present[i - 1]
        r = np.where(live, prices.close[i] / np.where(live, prices.close[i - 1], 1) - 1, 0)
        expected = float((w * live) @ r / (w * live).sum())
        assert levels[i] / levels[i - 1] - 1 == pytest.approx(expected, abs=1e-14)


def test_generated_prices_respect_limits(small_market):
    p = small_market.data.prices
    live = p.present & ~p.suspended
    assert np.all(p.close[live] <= p.limit_up[live])
    assert np.all(p.close[live] >= p.limit_down[live])
    assert np.all(p.close[p.present] > 0)


def test_generated_reports_are_valid(small_market):
    for r in small_market.data.reports:
        assert r.publish_date >= r.quarter_end
        assert 1 <= len(r.holdings) <= 10


@pytest.mark.parametrize("field, value", [("n_stocks", 0), ("n_days", 1), ("limit_pct", 0.0), ("n_ineligible_funds", 40)])
def test_nonsensical_spec_rejected(field, value):
    spec = SyntheticSpec(**{field: value})
    with pytest.raises(ValueError):
        generate_synthetic_market(spec, 0)


def test_spec_from_mapping():
    spec = SyntheticSpec.from_mapping({"n_stocks": "12", "market_vol": "0.02", "start_date": "2018-01-02"})
    assert (spec.n_stocks, spec.market_vol, spec.start_date) == (12, 0.02, date(2018, 1, 2))
    with pytest.raises(ValueError, match="unknown"):
        SyntheticSpec.from_mapping({"colour": "red"})


# ------------------------------------------------------------------ directory loading and truncation


def test_missing_file_is_named(tmp_path, small_market):
    write_market_data(small_market.data, tmp_path)
    (tmp_path / "prices.csv").unlink()
    with pytest.raises(FileNotFoundError, match="prices.csv"):
        load_market_data(tmp_path)


def test_calendar_file_must_agree(tmp_path, small_market):
    write_market_data(small_market.data, tmp_path)
    lines = (tmp_path / CALENDAR_FILE).read_text().splitlines()
    (tmp_path / CALENDAR_FILE).write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataError, match=CALENDAR_FILE):
        load_market_data(tmp_path)


def test_truncation_hides_the_future(small_market):
    data = small_market.data
    t = data.prices.dates[300]
    view = data.truncate(t)
    assert view.prices.dates[-1] == t
    assert view.index.dates[-1] == t
    assert all(r.publish_date <= t for r in view.reports)
    latest = view.latest_reports(t)
    assert latest and len({r.quarter_end for r in latest}) == 1


def test_index_series_validation():
    with pytest.raises(DataError):
        IndexSeries((date(2020, 1, 2), date(2020, 1, 1)), np.array([1.0, 1.0]))
    with pytest.raises(DataError):
        IndexSeries((date(2020, 1, 1),), np.array([0.0]))
