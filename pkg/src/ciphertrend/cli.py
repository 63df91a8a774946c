"""Command-line entry point: local runs and network roles"""

import argparse
import asyncio
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import structlog

from ._version import __version__
from .config import ENV_PREFIX, load_config
from .core.backend import DepthTrace
from .errors import EXIT_OK, EXIT_RUNTIME, CiphertrendError, ConfigError
from .models import DecisionRecord, Engine, ErrorReport, OrderLogEntry, Role, RunConfig
from .net.server import serve_aggregator
from .net.trader import trader_worker
from .pipeline import (
    Pipeline,
    PipelineResult,
    build_error_report,
    decision_records,
    local_order_log,
)
from .prices import SAMPLE_PATH, load_prices
from .reports import write_local_outputs, write_order_log

logger = structlog.get_logger()

ORDER_LOG_NAME = "order_log.csv"


def configure_logging(level: str = "INFO", json: bool = False) -> None:
    """Configure structlog once for this process; logs go to stderr"""
    level_no = logging.getLevelName(level.upper())
    if not isinstance(level_no, int):
        raise ConfigError(f"Unknown log level: {level}")
    renderer = structlog.processors.JSONRenderer() if json else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level_no),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


@dataclass
class LocalRun:
    result: PipelineResult
    oracle: PipelineResult
    threshold: float
    report: ErrorReport
    records: List[DecisionRecord]
    orders: List[OrderLogEntry]
    reports: List[ErrorReport] = field(default_factory=list)
    results: Dict[Engine, PipelineResult] = field(default_factory=dict)
    paths: List[Path] = field(default_factory=list)


def run_local(config: RunConfig, write: bool = True) -> LocalRun:
    """Encrypt, compute MACD and decisions, decrypt, and compare with the oracle

    Every configured engine is run and reported; the first one supplies the
    per-tick outputs and the order log.
    """
    prices = load_prices(config.input or SAMPLE_PATH)
    pipeline = Pipeline(
        config.scheme, config.strategy, seed=config.seed, noise_stddev=config.noise_stddev
    )
    oracle = pipeline.run_oracle(prices)
    threshold = pipeline.threshold_for(oracle)
    results: Dict[Engine, PipelineResult] = {}
    reports: List[ErrorReport] = []
    for engine in config.engines:
        result = oracle if engine is Engine.ORACLE else pipeline.run(prices, engine)
        results[engine] = result
        reports.append(build_error_report(result, oracle, config.scheme, threshold))
        logger.info(
            "Engine finished",
            engine=engine.value,
            macd_values=len(result.m),
            levels=reports[-1].depth_consumed,
            mape_decision=reports[-1].decision.signed_sum,
        )
    result = results[config.engine]
    run = LocalRun(
        result=result,
        oracle=oracle,
        threshold=threshold,
        report=reports[0],
        records=decision_records(prices, oracle, threshold, result),
        orders=local_order_log(prices, result, threshold, config.strategy.min_history),
        reports=reports,
        results=results,
    )
    if write:
        trace = result.trace or DepthTrace(config.scheme.top_level)
        run.paths = write_local_outputs(
            config.out,
            prices,
            config.strategy,
            oracle.series(),
            None if result is oracle else result.series(),
            run.records,
            reports,
            trace_csv=trace.to_csv(),
        )
        run.paths.append(write_order_log(Path(config.out) / ORDER_LOG_NAME, run.orders))
    return run


def run_role(config: RunConfig) -> int:
    """Dispatch to the configured role and return the process exit status"""
    if config.role is Role.LOCAL:
        run_local(config)
        return EXIT_OK
    if config.role is Role.AGGREGATOR:
        prices = load_prices(config.input or SAMPLE_PATH)
        entries = asyncio.run(
            serve_aggregator(
                config.addr,
                prices,
                config.scheme,
                config.strategy,
                traders=config.traders,
                log_path=Path(config.out) / ORDER_LOG_NAME,
                seed=config.seed,
                startup_timeout=config.startup_timeout,
            )
        )
        logger.info("Order log complete", ticks=len(entries))
        return EXIT_OK
    summary = asyncio.run(
        trader_worker(
            config.addr,
            config.trader_id or "trader-1",
            connect_attempts=config.connect_attempts,
        )
    )
    logger.info("Trader done", trader_id=summary.trader_id, signals=summary.signals)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ciphertrend",
        description="MACD trading decisions over encrypted price quotes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--input", help="date,close price file (default: shipped AAPL sample)")
    parser.add_argument(
        "--engine", help="oracle, exact-sim (or exact), he; comma-separate to compare engines"
    )
    parser.add_argument("--role", choices=[r.value for r in Role])
    parser.add_argument("--addr", help="host:port to bind (aggregator) or connect (trader)")
    parser.add_argument("--windows", help="fast,slow,signal windows, e.g. 12,26,9")
    parser.add_argument("--norm", type=float, help="divide prices by this before encryption")
    parser.add_argument("--tau", help="decision threshold, or 'auto' to calibrate")
    parser.add_argument("--params-file", help="KEY=VALUE configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed for keys, encryption and noise")
    parser.add_argument("--traders", type=int, help="traders the aggregator waits for")
    parser.add_argument("--trader-id", help="identity announced by a trader")
    parser.add_argument("--vote-rule", choices=["majority", "unanimous", "sum"])
    parser.add_argument("--tick-timeout", type=float, help="seconds to wait for each tick's votes")
    parser.add_argument("--min-history", type=int, help="quotes held before traders decide")
    parser.add_argument("--noise", type=float, help="exact-sim perturbation stddev")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-json", action="store_true", help="emit JSON log lines")
    return parser


def _flags(args: argparse.Namespace) -> dict:
    return {
        "INPUT": args.input,
        "ENGINE": args.engine,
        "ROLE": args.role,
        "ADDR": args.addr,
        "WINDOWS": args.windows,
        "NORM": args.norm,
        "TAU": args.tau,
        "OUT": args.out,
        "SEED": args.seed,
        "TRADERS": args.traders,
        "TRADER_ID": args.trader_id,
        "VOTE_RULE": args.vote_rule,
        "TICK_TIMEOUT": args.tick_timeout,
        "MIN_HISTORY": args.min_history,
        "NOISE": args.noise,
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(
            args.log_level or os.environ.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO"),
            json=args.log_json,
        )
        config = load_config(_flags(args), params_file=args.params_file)
        return run_role(config)
    except CiphertrendError as exc:
        logger.error("Run failed", error=str(exc), kind=type(exc).__name__)
        return exc.exit_code
    except KeyboardInterrupt:
        logger.warning("Interrupted; partial outputs kept")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
