"""End-to-end TRACK and BEAT strategies: screening through backtest and reports."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Any

import numpy as np

from sparseport.analytics import (
    align,
    curve_performance,
    excess_curve,
    industry_exposure_series,
    performance,
    rolling_correlation,
    simple_returns,
)
from sparseport._io import fmt_date, fmt_float, write_atomic, write_csv
from sparseport.backtest import (
    BacktestConfig,
    BacktestResult,
    EquityCurve,
    run_backtest,
    write_equity,
    write_fills,
    write_holdings,
)
from sparseport.construction import (
    BEAT,
    DEFAULT_GAMMA,
    TRACK,
    ExposureBand,
    IndustryMatrix,
    InfeasibleProblem,
    ProblemSpec,
    SolveFailed,
    benchmark_industry_exposure,
    build_beat_problem,
    build_tracking_problem,
    solve_portfolio,
)
from sparseport.marketdata import (
    IndexSeries,
    MarketData,
    log_returns,
    quarter_ends_between,
    rebalance_schedule,
)
from sparseport.qpsolver import QuadraticProgram, Settings, Solution
from sparseport.risk import maxflat_volatility, oas_shrink, sample_covariance, select_low_vol
from sparseport.screener import screen_funds, screen_stocks
from sparseport.weighting import (
    WeightVector,
    alpha_from_weights,
    select_top_fraction,
    weight_by_holding_mcap,
    weight_by_weight_sum,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class StrategyConfig:
    """Every tunable of a strategy run; field names double as config-file keys."""

    strategy: str = TRACK
    beta: float = 1.0
    kappa: float = 10.0
    gamma: float | None = None
    band_width: float = 0.02
    sector_cap: float = 0.10
    top_fraction: float = 0.5
    low_vol_k: int = 100
    cov_window: int = 504
    min_cov_window: int = 126
    track_window: int = 63
    flat_days: int = 63
    decay_days: int = 189
    min_listed_days: int = 90
    rebalance_offset_days: int = 16
    corr_window: int = 63
    initial_cash: float = 100_000_000.0
    commission_buy: float = 0.0005
    commission_sell: float = 0.00015
    slippage: float = 0.01
    lot_size: int = 100
    solver_eps: float = 1e-6
    solver_max_iter: int = 100_000
    solver_rho: float = 0.1
    solver_polish: bool = True
    start_date: date | None = None
    end_date: date | None = None

    def __post_init__(self):
        if self.strategy not in (TRACK, BEAT):
            raise ValueError(f"strategy must be {TRACK!r} or {BEAT!r}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", DEFAULT_GAMMA[self.strategy])
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must lie in (0, 1]")
        if self.min_cov_window < 2 or self.cov_window < self.min_cov_window:
            raise ValueError("need 2 <= min_cov_window <= cov_window")
        if self.track_window < 2 or self.track_window > self.min_cov_window:
            raise ValueError("track_window must lie in [2, min_cov_window]")
        if self.low_vol_k < 1:
            raise ValueError("low_vol_k must be positive")
        self.problem_spec()
        self.backtest_config()

    def problem_spec(self) -> ProblemSpec:
        return ProblemSpec(
            mode=self.strategy,
            beta=self.beta,
            kappa=self.kappa,
            gamma=self.gamma,
            band_width=self.band_width,
            sector_cap=self.sector_cap,
            return_window_days=self.track_window,
        )

    def backtest_config(self) -> BacktestConfig:
        return BacktestConfig(
            initial_cash=self.initial_cash,
            commission_buy=self.commission_buy,
            commission_sell=self.commission_sell,
            slippage=self.slippage,
            lot_size=self.lot_size,
            min_listed_days=self.min_listed_days,
        )

    def solver_settings(self) -> Settings:
        return Settings(
            rho=self.solver_rho,
            eps_primal=self.solver_eps,
            eps_dual=self.solver_eps,
            max_iter=self.solver_max_iter,
            polish=self.solver_polish,
        )

    def replace(self, **changes: Any) -> "StrategyConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        if "strategy" in changes and "gamma" not in changes:
            values["gamma"] = None
        values.update(changes)
        return StrategyConfig(**values)


@dataclass
class Decision:
    """Everything decided at one rebalance date."""

    as_of: date
    weights: WeightVector | None = None
    tickers: list[str] = field(default_factory=list)
    qp: QuadraticProgram | None = None
    solution: Solution | None = None
    industry: IndustryMatrix | None = None
    band_width: float | None = None
    exclusions: list[tuple[str, str]] = field(default_factory=list)
    stage: str = ""
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.weights is not None


def schedule_for(data: MarketData, config: StrategyConfig) -> list[date]:
    cal = data.calendar
    if not len(cal):
        return []
    start = config.start_date or cal.dates[0]
    end = config.end_date or cal.dates[-1]
    out = []
    for q in quarter_ends_between(cal.dates[0], cal.dates[-1]):
        try:
            (d,) = rebalance_schedule(cal, [q], config.rebalance_offset_days)
        except ValueError:
            continue
        if start <= d <= end and (not out or d > out[-1]):
            out.append(d)
    return out


def _sectors(data: MarketData) -> list[str]:
    return sorted({m.industry_code for m in data.instruments.values()})


def _history_window(view: MarketData, tickers: list[str], config: StrategyConfig, as_of: date):
    """Return window ending at ``as_of``, dropping tickers that lack full history in it."""
    prices = view.prices
    last = prices.row_of(as_of)
    if last is None:
        raise PipelineError(f"{as_of} is not a trading day")
    n_ret = min(config.cov_window, last)
    if n_ret < config.min_cov_window:
        raise PipelineError(f"only {n_ret} days of history, need {config.min_cov_window}")
    start_row = last - n_ret
    first = prices.first_bar_index()
    keep = [t for t in tickers if first[prices.col[t]] <= start_row] if tickers else []
    if not keep:
        raise PipelineError("no ticker has full history in the covariance window")
    return keep, log_returns(prices, keep, prices.dates[start_row], as_of)


def _bench_log_returns(index: IndexSeries, dates: list[date], prev: date) -> np.ndarray:
    levels = index.as_dict()
    seq = [prev, *dates]
    missing = [d for d in seq if d not in levels]
    if missing:
        raise PipelineError(f"benchmark index missing {len(missing)} dates, first {missing[0]}")
    lv = np.array([levels[d] for d in seq])
    return np.diff(np.log(lv))


def plan_rebalance(view: MarketData, as_of: date, config: StrategyConfig) -> Decision:
    """Build and solve the portfolio problem at ``as_of`` from ``view`` alone.

    Stage errors are recorded on the returned decision (``weights`` None)
    rather than raised.
    """
    dec = Decision(as_of)
    try:
        _plan(view, as_of, config, dec)
    except (PipelineError, InfeasibleProblem, SolveFailed, ValueError, KeyError) as exc:
        dec.weights = None
        dec.reason = str(exc)
        log.warning("%s: %s stage failed: %s", as_of, dec.stage, exc)
    return dec


def _plan(view: MarketData, as_of: date, config: StrategyConfig, dec: Decision) -> None:
    spec = config.problem_spec()
    dec.stage = "screen"
    funds = screen_funds(view.funds.values(), as_of, config.min_listed_days)
    dec.exclusions.extend(funds.exclusion_log)
    reports = [r for r in view.latest_reports(as_of) if r.fund_id in funds.fund_ids]
    if not reports:
        raise PipelineError("no fund reports available from screened funds")
    stocks = screen_stocks(reports, view.instruments, view.prices, as_of, config.min_listed_days)
    dec.exclusions.extend(stocks.exclusion_log)
    if not stocks.tickers:
        raise PipelineError("stock screen left no tickers")

    dec.stage = "weighting"
    weigh = weight_by_holding_mcap if config.strategy == TRACK else weight_by_weight_sum
    favoured = weigh(reports, stocks.tickers, as_of)
    universe = sorted(select_top_fraction(favoured, config.top_fraction))

    dec.stage = "risk"
    universe, window = _history_window(view, universe, config, as_of)
    returns = window.values
    if config.strategy == BEAT:
        scores = {
            t: maxflat_volatility(returns[k], config.flat_days, config.decay_days, t).score
            for k, t in enumerate(universe)
        }
        low = select_low_vol(universe, scores, config.low_vol_k)
        rows = [k for k, t in enumerate(universe) if t in low]
        universe = [universe[k] for k in rows]
        returns = returns[rows]
    cov = oas_shrink(sample_covariance(returns), returns.shape[1], universe, as_of)

    dec.stage = "alpha"
    total = math.fsum(favoured[t] for t in universe)
    alpha = alpha_from_weights(WeightVector({t: favoured[t] / total for t in universe}, as_of))
    alpha_vec = alpha.vector(universe)

    dec.stage = "construct"
    sectors = _sectors(view)
    industry = IndustryMatrix.from_instruments(universe, view.instruments, sectors)
    dec.industry = industry
    if config.strategy == TRACK:
        bench_ind = IndustryMatrix.from_instruments(sorted(stocks.tickers), view.instruments, sectors)
        exposure = benchmark_industry_exposure(reports, bench_ind)
        k = config.track_window
        stock_r = returns[:, -k:]
        ret_dates = window.dates[-k:]
        prev = window.dates[-k - 1] if len(window.dates) > k else view.prices.dates[view.prices.row_of(ret_dates[0]) - 1]
        bench_r = _bench_log_returns(view.index, ret_dates, prev)
        width = config.band_width
        try:
            qp = build_tracking_problem(alpha_vec, cov.matrix, stock_r, bench_r, industry, ExposureBand.around(exposure, width), spec)
        except InfeasibleProblem as first:
            width = 2 * width
            log.info("%s: bands infeasible (%s); relaxing to +/-%g", as_of, first, width)
            qp = build_tracking_problem(alpha_vec, cov.matrix, stock_r, bench_r, industry, ExposureBand.around(exposure, width), spec)
        dec.band_width = width
    else:
        qp = build_beat_problem(alpha_vec, cov.matrix, industry, spec)
    dec.qp = qp
    dec.tickers = universe

    dec.stage = "solve"
    weights, sol = solve_portfolio(qp, universe, spec.gamma, config.solver_settings())
    dec.solution = sol
    dec.weights = WeightVector(weights.entries, as_of)
    dec.stage = "done"


@dataclass
class StrategyResult:
    config: StrategyConfig
    schedule: list[date]
    decisions: dict[date, Decision]
    backtest: BacktestResult
    report: dict
    correlation: tuple[list[date], np.ndarray]
    exposure: tuple[list[date], np.ndarray, np.ndarray, list[str]]
    excess: dict[str, tuple[list[date], np.ndarray]]


def market_proxy(data: MarketData) -> IndexSeries:
    """Equal-weight daily simple-return index over all listed A-share stocks."""
    prices = data.prices
    a_share = np.array([data.instruments[t].board == "A-share" if t in data.instruments else False for t in prices.tickers])
    filled = prices.filled_close()
    levels = np.empty(len(prices.dates))
    levels[0] = 1000.0
    for i in range(1, len(prices.dates)):
        ok = a_share & prices.present[i] & ~np.isnan(filled[i - 1])
        r = filled[i, ok] / filled[i - 1, ok] - 1.0 if ok.any() else np.zeros(1)
        levels[i] = levels[i - 1] * (1.0 + float(r.mean()))
    return IndexSeries(tuple(prices.dates), levels)


def run_strategy(data: MarketData, config: StrategyConfig) -> StrategyResult:
    schedule = schedule_for(data, config)
    decisions: dict[date, Decision] = {}

    def provider(view: MarketData, as_of: date) -> WeightVector | None:
        dec = plan_rebalance(view, as_of, config)
        decisions[as_of] = dec
        return dec.weights

    bt = run_backtest(data, schedule, provider, config.backtest_config())
    if not bt.rebalanced:
        reasons = "; ".join(f"{d}: {x.stage}: {x.reason}" for d, x in decisions.items()) or "empty schedule"
        raise PipelineError(f"no rebalance succeeded ({reasons})")
    return _analyse(data, config, schedule, decisions, bt)


def run_track_strategy(data: MarketData, config: StrategyConfig | None = None) -> StrategyResult:
    config = config or StrategyConfig(strategy=TRACK)
    if config.strategy != TRACK:
        config = config.replace(strategy=TRACK)
    return run_strategy(data, config)


def run_beat_strategy(data: MarketData, config: StrategyConfig | None = None) -> StrategyResult:
    config = config or StrategyConfig(strategy=BEAT)
    if config.strategy != BEAT:
        config = config.replace(strategy=BEAT)
    return run_strategy(data, config)


def _analyse(data, config, schedule, decisions, bt: BacktestResult) -> StrategyResult:
    first = bt.rebalanced[0]
    curve: EquityCurve = bt.curve.slice_from(first)
    dates, port, bench = align(curve, data.index)
    port_r, bench_r = simple_returns(port), simple_returns(bench)
    window = min(config.corr_window, port_r.size)
    corr, median_corr = rolling_correlation(port_r, bench_r, window)
    corr_dates = dates[window:]

    sectors = _sectors(data)
    sector_of = {t: m.industry_code for t, m in data.instruments.items()}
    exp_dates, expo, counts = industry_exposure_series(bt.holdings, sector_of, sectors, dates=bt.rebalanced)

    targets = [d for d in decisions.values() if d.ok]
    max_w = max(max(d.weights.entries.values()) for d in targets)
    names = [len(d.weights) for d in targets]
    sector_max = max(float(np.max(d.industry.exposure([d.weights.get(t) for t in d.tickers]))) for d in targets)

    excess = {"benchmark": excess_curve(curve, data.index)}
    proxy = market_proxy(data)
    excess["market_proxy"] = excess_curve(curve, proxy)
    _, _, proxy_levels = align(curve, proxy)

    report = {
        "schema_version": SCHEMA_VERSION,
        "strategy": config.strategy,
        "period_start": dates[0].isoformat(),
        "period_end": dates[-1].isoformat(),
        "n_scheduled": len(schedule),
        "n_rebalances": len(bt.rebalanced),
        "rebalance_dates": [d.isoformat() for d in bt.rebalanced],
        "skipped": [
            {"date": d.isoformat(), "stage": x.stage, "reason": x.reason} for d, x in sorted(decisions.items()) if not x.ok
        ],
        "relaxed_band_dates": [
            d.isoformat() for d, x in sorted(decisions.items()) if x.ok and x.band_width is not None and x.band_width > config.band_width
        ],
        "portfolio": curve_performance(curve).as_dict(),
        "benchmark": performance(dates, bench).as_dict(),
        "market_proxy": performance(dates, proxy_levels).as_dict(),
        "median_rolling_correlation": median_corr,
        "correlation_window": window,
        "gamma": config.gamma,
        "max_weight_max": max_w,
        "sector_exposure_max": sector_max,
        "sector_cap_max": sector_max,
        "target_names_min": min(names),
        "target_names_mean": float(np.mean(names)),
        "holdings_count_mean": float(np.mean(counts)) if len(counts) else 0.0,
        "final_equity": float(curve.equity[-1]),
        "total_commission": math.fsum(f.commission for f in bt.fills),
        "n_fills": len(bt.fills),
        "n_skipped_legs": len(bt.skips),
    }
    return StrategyResult(
        config=config,
        schedule=schedule,
        decisions=decisions,
        backtest=bt,
        report=report,
        correlation=(corr_dates, corr),
        exposure=(exp_dates, expo, counts, sectors),
        excess=excess,
    )


OUTPUT_FILES = (
    "equity.csv",
    "fills.csv",
    "holdings.csv",
    "report.json",
    "correlation.csv",
    "exposure.csv",
    "excess.csv",
    "targets.csv",
)


def _opt_float(x: float) -> str:
    return "" if math.isnan(x) else fmt_float(x)


def write_outputs(result: StrategyResult, out_dir: str | Path, exclusions: bool = False) -> list[Path]:
    """Write the report bundle; returns the paths written, in order."""
    out = Path(out_dir)
    bt = result.backtest
    write_equity(bt.curve, out / "equity.csv")
    write_fills(bt.fills, out / "fills.csv")
    write_holdings(bt.holdings, out / "holdings.csv")
    write_atomic(out / "report.json", json.dumps(result.report, indent=2, sort_keys=True) + "\n")

    corr_dates, corr = result.correlation
    write_csv(out / "correlation.csv", ("date", "correlation"), ((fmt_date(d), _opt_float(c)) for d, c in zip(corr_dates, corr)))

    exp_dates, expo, counts, sectors = result.exposure
    write_csv(
        out / "exposure.csv",
        ("date", "n_holdings", *sectors),
        ((fmt_date(d), int(n), *(fmt_float(x) for x in row)) for d, n, row in zip(exp_dates, counts, expo)),
    )

    names = sorted(result.excess)
    dates = result.excess[names[0]][0]
    cols = [result.excess[k][1] for k in names]
    write_csv(
        out / "excess.csv",
        ("date", *(f"excess_vs_{k}" for k in names)),
        ((fmt_date(d), *(fmt_float(c[i]) for c in cols)) for i, d in enumerate(dates)),
    )

    write_csv(
        out / "targets.csv",
        ("date", "ticker", "weight"),
        ((fmt_date(d), t, fmt_float(w)) for d, tgt in sorted(bt.targets.items()) for t, w in tgt.entries.items()),
    )
    written = [out / name for name in OUTPUT_FILES]
    if exclusions:
        rows = ((fmt_date(d), key, rule) for d, dec in sorted(result.decisions.items()) for key, rule in dec.exclusions)
        write_csv(out / "exclusions.csv", ("date", "id", "rule"), rows)
        written.append(out / "exclusions.csv")
    return written
