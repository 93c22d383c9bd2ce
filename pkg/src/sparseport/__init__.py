"""Sparse long-only portfolios built from mutual funds' favourite stocks.

The package covers the full research loop: ingesting fund reports and
daily bars, screening funds and stocks, holding-based weighting, shrunk
covariance, a small ADMM quadratic-program solver, tracking/beat portfolio
construction, a China A-share aware backtest, and performance analytics.
"""

from sparseport.marketdata import (
    FundMeta,
    FundReport,
    Holding,
    IndexSeries,
    InstrumentMeta,
    MarketData,
    PriceBar,
    PriceTable,
    SyntheticSpec,
    TradingCalendar,
    generate_synthetic_market,
    load_market_data,
)
from sparseport.qpsolver import QuadraticProgram, Settings, Solution, l1_to_qp, solve

__version__ = "0.1.0"

__all__ = [
    "FundMeta",
    "FundReport",
    "Holding",
    "IndexSeries",
    "InstrumentMeta",
    "MarketData",
    "PriceBar",
    "PriceTable",
    "QuadraticProgram",
    "Settings",
    "Solution",
    "SyntheticSpec",
    "TradingCalendar",
    "generate_synthetic_market",
    "l1_to_qp",
    "load_market_data",
    "solve",
]
