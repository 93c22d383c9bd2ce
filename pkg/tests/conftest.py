from __future__ import annotations

import time

import pytest

from sparseport.marketdata import SyntheticSpec, generate_synthetic_market
from sparseport.pipeline import StrategyConfig, run_strategy

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

SMALL_SPEC = SyntheticSpec(
    n_stocks=40,
    n_funds=12,
    n_sectors=4,
    n_days=500,
    suspend_prob=0.01,
    n_late_listings=3,
    n_ineligible_funds=6,
)
SMALL_SEED = 11
FULL_SEED = 7


def small_config(strategy: str, **changes) -> StrategyConfig:
    """Caps loosened so a 40-stock, 4-sector market is feasible."""
    if strategy == "track":
        base = StrategyConfig(strategy="track", gamma=0.1, cov_window=252)
    else:
        base = StrategyConfig(strategy="beat", gamma=0.2, sector_cap=0.4, low_vol_k=15, cov_window=252)
    return base.replace(**changes) if changes else base


@pytest.fixture(scope="session")
def small_market():
    return generate_synthetic_market(SMALL_SPEC, SMALL_SEED)


@pytest.fixture(scope="session")
def small_runs(small_market):
    return {s: run_strategy(small_market.data, small_config(s)) for s in ("track", "beat")}


@pytest.fixture(scope="session")
def full_market():
    """200 stocks, 40 funds, 10 sectors, 1260 trading days (five years)."""
    return generate_synthetic_market(SyntheticSpec(), FULL_SEED)


@pytest.fixture(scope="session")
def full_runs(full_market):
    out = {}
    for strategy in ("track", "beat"):
        start = time.perf_counter()
        result = run_strategy(full_market.data, StrategyConfig(strategy=strategy))
        out[strategy] = (result, time.perf_counter() - start)
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
