"""Local end-to-end runs: encrypt quotes, MACD, decisions, decrypt"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import structlog

from .core.backend import BackendFactory, DepthTrace, EvaluationBackend, max_depth_of
from .decision import DEFAULT_RELU, ReluPoly, calibrate_threshold, o1, o2, o2_hat, threshold_orders
from .indicators import decrypt_series, macd
from .metrics import STAGE_SECONDS, StageTimer, mape, order_agreement, timing_band
from .models import (
    DecisionRecord,
    Engine,
    ErrorReport,
    OrderLogEntry,
    PriceSeries,
    Provenance,
    SchemeParams,
    StrategyConfig,
    TimingBand,
)

logger = structlog.get_logger()

WARMUP = "warmup"


@dataclass
class PipelineResult:
    """Decrypted (or plain) series of one run, indexed like the MACD line"""
    engine: Engine
    alpha: List[float]
    beta: List[float]
    theta: List[float]
    gamma: List[float]
    m: List[float]
    o2hat: List[float]
    offset: int
    trace: Optional[DepthTrace] = None
    timings: Dict[str, float] = field(default_factory=dict)
    interval_violations: int = 0

    @property
    def wma(self) -> List[float]:
        return self.alpha + self.beta

    @property
    def depth_consumed(self) -> int:
        return max_depth_of(self.trace) if self.trace is not None else 0

    def series(self) -> Dict[str, List[float]]:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "theta": self.theta,
            "gamma": self.gamma,
            "m": self.m,
        }


class Pipeline:
    """Runs the indicator and decision stages on one engine"""

    def __init__(
        self,
        params: SchemeParams,
        strategy: Optional[StrategyConfig] = None,
        poly: ReluPoly = DEFAULT_RELU,
        seed: Optional[int] = None,
        noise_stddev: float = 0.0,
    ):
        self.params = params
        self.strategy = strategy or StrategyConfig()
        self.poly = poly
        self.seed = seed
        self.noise_stddev = noise_stddev
        self.logger = logger.bind(component="pipeline")

    def make_backend(self, engine: Engine) -> EvaluationBackend:
        if engine is Engine.EXACT:
            return BackendFactory.create(
                engine, self.params, noise_stddev=self.noise_stddev, seed=self.seed
            )
        return BackendFactory.create(engine, self.params, seed=self.seed)

    def run_oracle(self, prices: PriceSeries) -> PipelineResult:
        timer = StageTimer()
        quotes = prices.normalized(self.strategy.normalization)
        start = time.perf_counter()
        result = timer.run("macd", lambda: macd(quotes, None, self.strategy.windows))
        decisions = timer.run("decision", lambda: o2_hat(result.m, None, self.poly))
        timer.timings["total"] = time.perf_counter() - start
        return PipelineResult(
            engine=Engine.ORACLE,
            alpha=result.alpha.values,
            beta=result.beta.values,
            theta=result.theta.values,
            gamma=result.gamma.values,
            m=result.m.values,
            o2hat=decisions.values,
            offset=result.m.offset,
            timings=timer.timings,
            interval_violations=decisions.interval_violations,
        )

    def run_encrypted(self, prices: PriceSeries, engine: Engine) -> PipelineResult:
        """Encrypt every quote, evaluate MACD and decisions, decrypt the outputs"""
        backend = self.make_backend(engine)
        timer = StageTimer()
        quotes = prices.normalized(self.strategy.normalization)
        self.logger.info("Encrypted run started", engine=engine.value, quotes=len(quotes))

        handles = timer.run("encrypt", lambda: [backend.b_encrypt(q) for q in quotes])
        start = time.perf_counter()
        result = timer.run("macd", lambda: macd(handles, backend, self.strategy.windows))
        decisions = timer.run("decision", lambda: o2_hat(result.m, backend, self.poly))
        timer.timings["total"] = time.perf_counter() - start
        STAGE_SECONDS.labels(stage="total").observe(timer.timings["total"])
        trace = backend.trace

        def decrypt_all():
            return {
                name: decrypt_series(backend, series)
                for name, series in (
                    ("alpha", result.alpha),
                    ("beta", result.beta),
                    ("theta", result.theta),
                    ("gamma", result.gamma),
                    ("m", result.m),
                    ("o2hat", decisions),
                )
            }

        plain = timer.run("decrypt", decrypt_all)
        self.logger.info(
            "Encrypted run finished",
            engine=engine.value,
            depth=max_depth_of(trace),
            seconds=round(timer.timings["total"], 3),
        )
        return PipelineResult(
            engine=engine,
            offset=result.m.offset,
            trace=trace,
            timings=timer.timings,
            **plain,
        )

    def run(self, prices: PriceSeries, engine: Engine) -> PipelineResult:
        if engine is Engine.ORACLE:
            return self.run_oracle(prices)
        return self.run_encrypted(prices, engine)

    def threshold_for(self, oracle: PipelineResult) -> float:
        if self.strategy.threshold is not None:
            return self.strategy.threshold
        return calibrate_threshold(oracle.o2hat, o1(oracle.m))


def per_tick_timings(result: PipelineResult) -> Dict[str, float]:
    ticks = max(1, len(result.m))
    return {
        "macd": result.timings.get("macd", 0.0) / ticks,
        "decision": result.timings.get("decision", 0.0) / ticks,
        "total": result.timings.get("total", 0.0) / ticks,
    }


def build_error_report(
    result: PipelineResult,
    oracle: PipelineResult,
    params: SchemeParams,
    threshold: float,
) -> ErrorReport:
    """Compare one engine's outputs with the oracle"""
    orders = threshold_orders(result.o2hat, threshold)
    timings = per_tick_timings(result)
    band = timing_band(timings["total"])
    if band is not TimingBand.WITHIN:
        logger.warning(
            "Per-quote time over budget",
            engine=result.engine.value,
            seconds=round(timings["total"], 3),
            band=band.value,
        )
    return ErrorReport(
        engine=result.engine,
        wma=mape(result.wma, oracle.wma),
        macd=mape(result.m, oracle.m),
        decision=mape(result.o2hat, oracle.o2hat),
        timings=timings,
        within_budget=band is TimingBand.WITHIN,
        timing_band=band,
        params=params.summary(),
        depth_consumed=result.depth_consumed,
        threshold=threshold,
        agreement=order_agreement(o1(oracle.m), orders),
        interval_violations=oracle.interval_violations,
    )


def decision_records(
    prices: PriceSeries,
    oracle: PipelineResult,
    threshold: float,
    result: Optional[PipelineResult] = None,
) -> List[DecisionRecord]:
    first = o1(oracle.m)
    second = o2(oracle.m)
    encrypted = result is not None and result.engine is not Engine.ORACLE
    source = result.o2hat if encrypted else oracle.o2hat
    orders = threshold_orders(source, threshold)
    records = []
    for i, value in enumerate(oracle.o2hat):
        index = oracle.offset + i
        records.append(
            DecisionRecord(
                index=index,
                date=prices.date_at(index),
                o1=first[i],
                o2=second[i],
                o2hat_plain=value,
                o2hat_decrypted=result.o2hat[i] if encrypted else None,
                order=orders[i],
                provenance=Provenance.ENCRYPTED if encrypted else Provenance.ORACLE,
            )
        )
    return records


def local_order_log(
    prices: PriceSeries,
    result: PipelineResult,
    threshold: float,
    min_history: int,
    voter: str = "local",
) -> List[OrderLogEntry]:
    """Order log a single in-process trader would produce, tick by tick"""
    orders = threshold_orders(result.o2hat, threshold)
    entries = []
    for tick in range(len(prices)):
        j = tick - result.offset
        if tick + 1 < min_history or j < 0:
            entries.append(
                OrderLogEntry(
                    tick=tick, date=prices.date_at(tick), votes={voter: WARMUP}, final_order=0
                )
            )
            continue
        order = orders[j]
        entries.append(
            OrderLogEntry(
                tick=tick, date=prices.date_at(tick), votes={voter: str(order)}, final_order=order
            )
        )
    return entries
