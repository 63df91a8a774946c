"""Error metrics, stage timing and process metrics"""

import time
from typing import Any, Callable, Dict, Optional, Sequence

import structlog
from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest

from .errors import MetricUndefinedError, ParameterError
from .models import MapeResult, OrderAgreement, TimingBand

logger = structlog.get_logger()

REGISTRY = CollectorRegistry()

STAGE_SECONDS = Histogram(
    "ciphertrend_stage_seconds",
    "Wall-clock duration of pipeline stages",
    ["stage"],
    registry=REGISTRY,
    buckets=(0.001, 0.01, 0.1, 0.5, 1, 5, 15, 60, 300, 900),
)
FRAMES_TOTAL = Counter(
    "ciphertrend_frames_total",
    "Frames sent and received",
    ["direction", "frame_type"],
    registry=REGISTRY,
)
DECISIONS_TOTAL = Counter(
    "ciphertrend_decisions_total",
    "Per-trader decisions seen by the aggregator",
    ["outcome"],
    registry=REGISTRY,
)

DEFAULT_EPSILON_RATIO = 1e-8

# per-quote MACD + decision wall time, seconds
QUOTE_BUDGET_SECONDS = 5.0
QUOTE_REPORT_LIMIT_SECONDS = 15.0


def mape(
    x: Sequence[float], y: Sequence[float], epsilon: Optional[float] = None
) -> MapeResult:
    """Percentage error of x against reference y

    signed_sum is sum(|x - y| / y) * 100 with the signed denominator and no
    1/N; normalized is the mean of |x - y| / |y| * 100. References with
    |y| < epsilon (default 1e-8 * max|y|) are excluded from both.
    """
    if len(x) != len(y):
        raise ParameterError(f"Length mismatch: {len(x)} != {len(y)}")
    peak = max((abs(v) for v in y), default=0.0)
    if peak == 0.0:
        raise MetricUndefinedError("Reference series is empty or all zero")
    eps = DEFAULT_EPSILON_RATIO * peak if epsilon is None else epsilon
    signed = 0.0
    normalized = 0.0
    count = 0
    for xi, yi in zip(x, y):
        if abs(yi) < eps:
            continue
        err = abs(xi - yi)
        signed += err / yi
        normalized += err / abs(yi)
        count += 1
    excluded = len(y) - count
    if count == 0:
        raise MetricUndefinedError("Every reference value fell under the exclusion guard")
    return MapeResult(
        signed_sum=signed * 100.0,
        normalized=normalized / count * 100.0,
        count=count,
        excluded=excluded,
    )


def time_stage(label: str, thunk: Callable[[], Any]) -> float:
    """Run thunk and return its wall-clock duration in seconds"""
    start = time.perf_counter()
    thunk()
    elapsed = time.perf_counter() - start
    STAGE_SECONDS.labels(stage=label).observe(elapsed)
    return elapsed


class StageTimer:
    """Collects stage durations while passing results through"""

    def __init__(self):
        self.timings: Dict[str, float] = {}

    def run(self, label: str, thunk: Callable[[], Any]) -> Any:
        box = []
        elapsed = time_stage(label, lambda: box.append(thunk()))
        self.timings[label] = self.timings.get(label, 0.0) + elapsed
        logger.debug("Stage finished", stage=label, seconds=round(elapsed, 6))
        return box[0]


def order_agreement(expected: Sequence[int], actual: Sequence[int]) -> OrderAgreement:
    """Compare thresholded orders with exact crossing orders"""
    crossings = sum(1 for e in expected if e != 0)
    matched = sum(1 for e, a in zip(expected, actual) if e != 0 and a == e)
    spurious = sum(1 for e, a in zip(expected, actual) if a != 0 and a != e)
    return OrderAgreement(
        crossings=crossings, matched=matched, missed=crossings - matched, spurious=spurious
    )


def timing_band(seconds_per_quote: float) -> TimingBand:
    if seconds_per_quote <= QUOTE_BUDGET_SECONDS:
        return TimingBand.WITHIN
    if seconds_per_quote <= QUOTE_REPORT_LIMIT_SECONDS:
        return TimingBand.REPORTED
    return TimingBand.EXCEEDED


def render_metrics() -> str:
    return generate_latest(REGISTRY).decode("utf-8")
