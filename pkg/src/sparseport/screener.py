"""Fund and stock eligibility screens applied at a rebalance date."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping

from sparseport.marketdata import A_SHARE, FundMeta, FundReport, InstrumentMeta, PriceTable

MIN_LISTED_DAYS = 90

FUND_RULES = (
    "not_open_ended",
    "category",
    "etf_like",
    "excluded_type",
    "listed_too_recently",
    "duplicate_share_class",
)
STOCK_RULES = ("not_a_share", "listed_too_recently", "no_data", "suspended")


@dataclass
class ScreenResult:
    as_of: date
    fund_ids: set[str] = field(default_factory=set)
    tickers: set[str] = field(default_factory=set)
    exclusion_log: list[tuple[str, str]] = field(default_factory=list)

    @property
    def excluded_ids(self) -> set[str]:
        return {i for i, _ in self.exclusion_log}


def share_class_key(fund: FundMeta) -> str:
    """Fund name with its trailing share-class letter removed, casefolded."""
    name = fund.name.strip()
    suffix = (fund.share_class_suffix or "").strip()
    if suffix and name.upper().endswith(suffix.upper()):
        name = name[: -len(suffix)]
    return " ".join(name.split()).casefold()


def listed_long_enough(listed: date, as_of: date, min_days: int = MIN_LISTED_DAYS) -> bool:
    return listed + timedelta(days=min_days) <= as_of


def _fund_rule(fund: FundMeta, as_of: date, min_days: int) -> str | None:
    if not fund.is_open_ended:
        return "not_open_ended"
    if fund.category not in ("Equity", "Hybrid"):
        return "category"
    if fund.is_etf_like:
        return "etf_like"
    if fund.is_excluded_type:
        return "excluded_type"
    if not listed_long_enough(fund.list_date, as_of, min_days):
        return "listed_too_recently"
    return None


def screen_funds(funds: Iterable[FundMeta], as_of: date, min_listed_days: int = MIN_LISTED_DAYS) -> ScreenResult:
    """Keep open-ended, active Equity/Hybrid funds, one per share-class family.

    Within a family of same-named funds the lexicographically smallest
    share-class suffix survives (no suffix sorts first), then the smallest
    fund id.
    """
    result = ScreenResult(as_of)
    passed: list[FundMeta] = []
    for fund in sorted(funds, key=lambda f: f.fund_id):
        rule = _fund_rule(fund, as_of, min_listed_days)
        if rule is None:
            passed.append(fund)
        else:
            result.exclusion_log.append((fund.fund_id, rule))
    families: dict[str, list[FundMeta]] = {}
    for fund in passed:
        families.setdefault(share_class_key(fund), []).append(fund)
    for members in families.values():
        members.sort(key=lambda f: ((f.share_class_suffix or ""), f.fund_id))
        result.fund_ids.add(members[0].fund_id)
        for dup in members[1:]:
            result.exclusion_log.append((dup.fund_id, "duplicate_share_class"))
    result.exclusion_log.sort()
    return result


def screen_stocks(
    reports: Iterable[FundReport],
    instruments: Mapping[str, InstrumentMeta],
    prices: PriceTable,
    as_of: date,
    min_listed_days: int = MIN_LISTED_DAYS,
) -> ScreenResult:
    """Tradeable A-share stocks among the reported top holdings.

    ST stocks are kept. Raises ``KeyError`` naming any held ticker that is
    missing from ``instruments``.
    """
    reports = list(reports)
    held = sorted({t for r in reports for t in r.tickers})
    missing = [t for t in held if t not in instruments]
    if missing:
        raise KeyError(f"tickers in fund reports missing from instruments: {', '.join(missing)}")
    result = ScreenResult(as_of, fund_ids={r.fund_id for r in reports})
    for t in held:
        meta = instruments[t]
        bar = prices.bar(t, as_of)
        if meta.board != A_SHARE:
            rule = "not_a_share"
        elif not listed_long_enough(meta.listing_date, as_of, min_listed_days):
            rule = "listed_too_recently"
        elif bar is None:
            rule = "no_data"
        elif bar.is_suspended:
            rule = "suspended"
        else:
            result.tickers.add(t)
            continue
        result.exclusion_log.append((t, rule))
    return result
