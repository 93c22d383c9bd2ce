from __future__ import annotations

from dataclasses import replace
from datetime import date, timedelta

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseport.marketdata import FundMeta, FundReport, Holding, InstrumentMeta, PriceBar, PriceTable
from sparseport.screener import screen_funds, screen_stocks

AS_OF = date(2020, 7, 16)


def fund(fid, name=None, category="Hybrid", open_ended=True, etf=False, excluded=False, listed=date(2019, 1, 1), suffix=None):
    return FundMeta(fid, name or f"Fund {fid}", category, open_ended, etf, excluded, listed, suffix)


def test_plain_hybrid_fund_four_months_old_is_kept():
    res = screen_funds([fund("F1", listed=AS_OF - timedelta(days=122))], AS_OF)
    assert res.fund_ids == {"F1"}
    assert res.exclusion_log == []


def test_share_class_twins_keep_class_a():
    funds = [fund("F2", "Growth C", suffix="C"), fund("F1", "Growth A", suffix="A")]
    res = screen_funds(funds, AS_OF)
    assert res.fund_ids == {"F1"}
    assert res.exclusion_log == [("F2", "duplicate_share_class")]


def test_first_failing_rule_is_logged():
    f = fund("F1", category="other", open_ended=False, etf=True)
    assert screen_funds([f], AS_OF).exclusion_log == [("F1", "not_open_ended")]
    f = fund("F1", category="other", etf=True)
    assert screen_funds([f], AS_OF).exclusion_log == [("F1", "category")]
    f = fund("F1", etf=True, excluded=True)
    assert screen_funds([f], AS_OF).exclusion_log == [("F1", "etf_like")]
    f = fund("F1", excluded=True, listed=AS_OF)
    assert screen_funds([f], AS_OF).exclusion_log == [("F1", "excluded_type")]
    f = fund("F1", listed=AS_OF - timedelta(days=89))
    assert screen_funds([f], AS_OF).exclusion_log == [("F1", "listed_too_recently")]


def test_empty_input():
    res = screen_funds([], AS_OF)
    assert res.fund_ids == set() and res.exclusion_log == []


fund_tables = st.lists(
    st.builds(
        fund,
        fid=st.text("0123456789", min_size=3, max_size=3),
        name=st.sampled_from(["Alpha A", "Alpha C", "Beta", "Gamma B", "Gamma A", "Delta"]),
        category=st.sampled_from(["Equity", "Hybrid", "other"]),
        open_ended=st.booleans(),
        etf=st.booleans(),
        excluded=st.booleans(),
        listed=st.dates(date(2019, 12, 1), date(2020, 7, 16)),
        suffix=st.sampled_from([None, "A", "B", "C"]),
    ),
    max_size=12,
    unique_by=lambda f: f.fund_id,
)


def _oracle(funds, as_of):
    """Rule-by-rule filter composition followed by the family dedup."""
    survivors = [f for f in funds if f.is_open_ended]
    survivors = [f for f in survivors if f.category in ("Equity", "Hybrid")]
    survivors = [f for f in survivors if not f.is_etf_like]
    survivors = [f for f in survivors if not f.is_excluded_type]
    survivors = [f for f in survivors if (as_of - f.list_date).days >= 90]
    best = {}
    for f in survivors:
        key = f.name[:-2].lower() if f.share_class_suffix and f.name.endswith(" " + f.share_class_suffix) else f.name.lower()
        rank = (f.share_class_suffix or "", f.fund_id)
        if key not in best or rank < best[key][0]:
            best[key] = (rank, f.fund_id)
    return {fid for _, fid in best.values()}


@given(fund_tables)
def test_screen_matches_rule_composition(funds):
    res = screen_funds(funds, AS_OF)
    assert res.fund_ids == _oracle(funds, AS_OF)
    # every input id appears exactly once across kept and excluded
    ids = [f.fund_id for f in funds]
    assert sorted(ids) == sorted(list(res.fund_ids) + [i for i, _ in res.exclusion_log])
    assert not res.fund_ids & res.excluded_ids


@given(fund_tables)
def test_screen_is_idempotent(funds):
    res = screen_funds(funds, AS_OF)
    kept = [f for f in funds if f.fund_id in res.fund_ids]
    assert screen_funds(kept, AS_OF).fund_ids == res.fund_ids


@given(fund_tables, st.data())
def test_clearing_a_flag_never_shrinks_the_kept_count(funds, data):
    if not funds:
        return
    k = data.draw(st.integers(0, len(funds) - 1))
    flag = data.draw(st.sampled_from(["is_etf_like", "is_excluded_type"]))
    relaxed = list(funds)
    relaxed[k] = replace(funds[k], **{flag: False})
    before = screen_funds(funds, AS_OF).fund_ids
    after = screen_funds(relaxed, AS_OF).fund_ids
    assert len(after) >= len(before)


# ------------------------------------------------------------------ stocks


def _market():
    instruments = {
        "OLD": InstrumentMeta("OLD", date(2010, 1, 1), "I1"),
        "NEW": InstrumentMeta("NEW", AS_OF - timedelta(days=60), "I1"),
        "SUS": InstrumentMeta("SUS", date(2010, 1, 1), "I2"),
        "HK": InstrumentMeta("HK", date(2010, 1, 1), "I2", "other"),
        "GONE": InstrumentMeta("GONE", date(2010, 1, 1), "I2"),
        "ST": InstrumentMeta("ST", date(2010, 1, 1), "I2"),
    }
    bars = [
        PriceBar(t, AS_OF, 10.0, 10.0, t == "SUS", 11.0, 9.0)
        for t in ("OLD", "NEW", "SUS", "HK", "ST")
    ]
    return instruments, PriceTable.from_bars(bars)


def _report(fid, tickers):
    return FundReport(fid, date(2020, 6, 30), date(2020, 7, 15), tuple(Holding(t, 100, 1000.0, 0.05) for t in tickers))


def test_stock_rules():
    instruments, prices = _market()
    res = screen_stocks([_report("F1", ["OLD", "NEW", "SUS"]), _report("F2", ["HK", "GONE", "ST", "OLD"])], instruments, prices, AS_OF)
    assert res.tickers == {"OLD", "ST"}
    assert dict(res.exclusion_log) == {
        "NEW": "listed_too_recently",
        "SUS": "suspended",
        "HK": "not_a_share",
        "GONE": "no_data",
    }


def test_unknown_ticker_is_named():
    instruments, prices = _market()
    with pytest.raises(KeyError, match="MYSTERY"):
        screen_stocks([_report("F1", ["OLD", "MYSTERY"])], instruments, prices, AS_OF)


@given(st.lists(st.lists(st.sampled_from(["OLD", "NEW", "SUS", "HK", "GONE", "ST"]), min_size=1, max_size=6, unique=True), max_size=5))
def test_stock_screen_output_within_reported_union(holdings):
    instruments, prices = _market()
    reports = [_report(f"F{k}", h) for k, h in enumerate(holdings)]
    res = screen_stocks(reports, instruments, prices, AS_OF)
    union = {t for h in holdings for t in h}
    assert res.tickers <= union
    assert res.tickers | res.excluded_ids == union
