"""Command-line entry point: ``generate``, ``run`` and ``inspect-qp``.

Exit codes: 0 success, 1 runtime or data failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import date
from pathlib import Path

from sparseport._io import DataError, fmt_float, parse_date, write_csv
from sparseport.backtest import BacktestError
from sparseport.config import ConfigError, load_config, load_synthetic_spec
from sparseport.construction import BEAT, TRACK
from sparseport.marketdata import generate_synthetic_market, load_market_data, write_market_data
from sparseport.pipeline import PipelineError, plan_rebalance, run_strategy, schedule_for, write_outputs

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

log = logging.getLogger("sparseport")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseport", description="Fund-holding index tracking and enhancement backtests.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic market data directory")
    gen.add_argument("--spec", required=True, help="generator spec file (key = value)")
    gen.add_argument("--seed", required=True, type=int)
    gen.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="backtest a strategy and write reports")
    run.add_argument("--config", required=True, help="run config file (key = value)")
    run.add_argument("--strategy", choices=(TRACK, BEAT), help="overrides the config's strategy")
    run.add_argument("--data", required=True, help="market data directory")
    run.add_argument("--out", required=True, help="report directory")
    run.add_argument("--dump-qp", action="store_true", help="also dump every rebalance QP under OUT/qp/<date>/")
    run.add_argument("-v", "--verbose", action="store_true", help="log progress and write exclusions.csv")

    insp = sub.add_parser("inspect-qp", help="dump the QP solved at one rebalance date")
    insp.add_argument("--config", required=True)
    insp.add_argument("--date", required=True, help="rebalance date, YYYY-MM-DD")
    insp.add_argument("--data", required=True, help="market data directory")
    insp.add_argument("--strategy", choices=(TRACK, BEAT))
    insp.add_argument("--out", help="dump directory (default: qp-<date>)")
    return parser


def _load_config(path: str, strategy: str | None):
    config = load_config(path)
    if strategy and strategy != config.strategy:
        config = config.replace(strategy=strategy)
    return config


def _dump_decision(dec, directory: Path) -> None:
    dec.qp.dump(directory)
    write_csv(directory / "tickers.csv", ("ticker",), ((t,) for t in dec.tickers))
    if dec.weights is not None:
        write_csv(directory / "weights.csv", ("ticker", "weight"), ((t, fmt_float(dec.weights.get(t))) for t in dec.tickers))


def cmd_generate(args) -> int:
    spec = load_synthetic_spec(args.spec)
    market = generate_synthetic_market(spec, args.seed)
    write_market_data(market.data, args.out)
    print(f"wrote synthetic market ({spec.n_stocks} stocks, {spec.n_funds} funds, {spec.n_days} days) to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_config(args.config, args.strategy)
    data = load_market_data(args.data)
    result = run_strategy(data, config)
    out = Path(args.out)
    write_outputs(result, out, exclusions=args.verbose)
    if args.dump_qp:
        for d, dec in sorted(result.decisions.items()):
            if dec.qp is not None:
                _dump_decision(dec, out / "qp" / d.isoformat())
    for d, dec in sorted(result.decisions.items()):
        if not dec.ok:
            print(f"warning: {d} skipped at stage {dec.stage}: {dec.reason}", file=sys.stderr)
    rep = result.report
    print(
        f"{config.strategy}: {rep['n_rebalances']}/{rep['n_scheduled']} rebalances, "
        f"median rolling correlation {rep['median_rolling_correlation']}, "
        f"total return {rep['portfolio']['total_return']:.2f}%; reports in {out}"
    )
    return EXIT_OK


def cmd_inspect_qp(args) -> int:
    config = _load_config(args.config, args.strategy)
    try:
        when = parse_date(args.date)
    except ValueError:
        raise UsageError(f"--date: not an ISO date: {args.date!r}") from None
    data = load_market_data(args.data)
    schedule = schedule_for(data, config)
    if when not in schedule:
        nearby = ", ".join(d.isoformat() for d in _neighbours(schedule, when))
        raise UsageError(f"{when} is not a rebalance date" + (f" (nearest: {nearby})" if nearby else ""))
    dec = plan_rebalance(data.truncate(when), when, config)
    if dec.qp is None:
        raise PipelineError(f"{when}: stage {dec.stage} failed before a QP was built: {dec.reason}")
    out = Path(args.out or f"qp-{when.isoformat()}")
    _dump_decision(dec, out)
    status = dec.solution.status if dec.solution else f"not solved ({dec.stage}: {dec.reason})"
    print(f"{when}: n={dec.qp.n} m={dec.qp.m}, solver {status}; dumped to {out}")
    return EXIT_OK


def _neighbours(schedule: list[date], when: date) -> list[date]:
    before = [d for d in schedule if d < when][-1:]
    after = [d for d in schedule if d > when][:1]
    return before + after


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "inspect-qp": cmd_inspect_qp}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (DataError, PipelineError, BacktestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
