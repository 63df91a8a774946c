"""Crossing decisions on the MACD line and their polynomial ReLU approximation"""

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from .core.arithmetic import Arithmetic, PlainArithmetic
from .errors import ParameterError
from .indicators import SignalSeries, _ops_for

logger = structlog.get_logger()

# c0..c9, constant term first
RELU_COEFFICIENTS = (
    0.0753, 0.4475, 0.5173, 0.0882, -0.0984, -0.0253, 0.009, 0.0025, -0.0003, -0.0001,
)


@dataclass(frozen=True)
class ReluPoly:
    """Polynomial stand-in for max(x, 0) on [-bound, bound]"""
    coefficients: Tuple[float, ...] = RELU_COEFFICIENTS
    bound: float = 2.0

    def __post_init__(self):
        degree = len(self.coefficients) - 1
        if not 5 <= degree <= 11 or degree % 4 == 0:
            raise ParameterError(f"Unsupported approximation degree {degree}")
        if not self.bound > 0:
            raise ParameterError("Interval bound must be positive")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def blocks(self) -> List[Tuple[float, ...]]:
        """Coefficient groups of four for baby-step/giant-step evaluation"""
        c = self.coefficients
        return [tuple(c[i:i + 4]) for i in range(0, len(c), 4)]

    def in_interval(self, x: float) -> bool:
        return -self.bound <= x <= self.bound

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc


DEFAULT_RELU = ReluPoly()


def relu(x: float) -> float:
    return x if x > 0 else 0.0


def relu_approx(x: float, poly: ReluPoly = DEFAULT_RELU) -> float:
    """Horner evaluation of the approximation"""
    return poly(x)


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def adjacent_differences(m: Sequence[float]) -> List[float]:
    return [0.0] + [m[i - 1] - m[i] for i in range(1, len(m))]


def adjacent_products(m: Sequence[float]) -> List[float]:
    return [0.0] + [m[i - 1] * m[i] for i in range(1, len(m))]


def o1(m: Sequence[float]) -> List[int]:
    """+1 on upward zero crossings, -1 on downward, 0 otherwise

    A touch (product exactly zero) counts as hold.
    """
    orders = []
    for d, p in zip(adjacent_differences(m), adjacent_products(m)):
        raw = _sign(d) * (_sign(p) - 1)
        orders.append(int(raw / 2))
    return orders


def o2(m: Sequence[float]) -> List[int]:
    return [-_sign(d * relu(-p)) for d, p in zip(adjacent_differences(m), adjacent_products(m))]


def evaluate_relu_poly(ops: Arithmetic, x: Any, poly: ReluPoly = DEFAULT_RELU) -> Any:
    """Baby-step/giant-step evaluation with powers x, x^2, x^3 and giants x^4, x^8"""
    x2 = ops.mul(x, x)
    x3 = ops.mul(x2, x)
    x4 = ops.mul(x2, x2)
    baby = [x, x2, x3]
    blocks = poly.blocks()
    result = ops.poly_block(baby, blocks[0], ops.unit_scale)
    giant = x4
    for i, coeffs in enumerate(blocks[1:]):
        if i == 1:
            giant = ops.mul(x4, x4)
        result = ops.add(result, ops.giant_step(giant, baby, coeffs))
    return result


def decision_step(ops: Arithmetic, m_prev: Any, m_cur: Any, poly: ReluPoly = DEFAULT_RELU) -> Any:
    """-(delta * r(-pi)) for one pair of consecutive MACD values"""
    delta = ops.sub(m_prev, m_cur)
    x = ops.negate(ops.mul(m_prev, m_cur))
    r = evaluate_relu_poly(ops, x, poly)
    return ops.negate(ops.mul(delta, r))


@dataclass
class DecisionSeries:
    """Approximate decision values aligned with the MACD series"""
    values: List[Any]
    offset: int
    delta: List[float] = field(default_factory=list)
    pi: List[float] = field(default_factory=list)
    orders: List[int] = field(default_factory=list)
    interval_violations: int = 0

    def __len__(self) -> int:
        return len(self.values)


def o2_hat(m, engine=None, poly: ReluPoly = DEFAULT_RELU) -> DecisionSeries:
    """Approximate decision for every MACD tick; index 0 is exactly zero"""
    series = m if isinstance(m, SignalSeries) else SignalSeries(list(m))
    if len(series) == 0:
        raise ParameterError("Decision needs a nonempty MACD series")
    ops = _ops_for(engine)
    steps = [
        decision_step(ops, series[i - 1], series[i], poly) for i in range(1, len(series))
    ]
    first = ops.zero_like(steps[0] if steps else series[0])
    result = DecisionSeries([first] + steps, series.offset)
    if isinstance(ops, PlainArithmetic):
        result.delta = adjacent_differences(series.values)
        result.pi = adjacent_products(series.values)
        result.interval_violations = sum(1 for p in result.pi if not poly.in_interval(-p))
        if result.interval_violations:
            logger.warning(
                "Approximation evaluated outside its interval",
                count=result.interval_violations,
                bound=poly.bound,
            )
    return result


def threshold_orders(values: Sequence[float], tau: float) -> List[int]:
    """+1 above tau, -1 below -tau, hold otherwise (strict)"""
    if not tau > 0:
        raise ParameterError(f"Threshold must be positive, got {tau}")
    return [1 if v > tau else -1 if v < -tau else 0 for v in values]


def calibrate_threshold(o2hat: Sequence[float], orders: Sequence[int]) -> float:
    """Twice the largest |decision| on ticks without a crossing"""
    quiet = [abs(v) for v, o in zip(o2hat, orders) if o == 0]
    peak = max(quiet, default=0.0)
    if peak == 0.0:
        crossings = [abs(v) for v, o in zip(o2hat, orders) if o != 0]
        peak = min(crossings, default=1.0) / 4
    return 2 * peak


def relu_fit_error(
    poly: ReluPoly = DEFAULT_RELU, bound: Optional[float] = None, step: float = 1e-3
) -> float:
    """Largest |poly(x) - relu(x)| on a grid over [-bound, bound]"""
    bound = poly.bound if bound is None else bound
    xs = np.arange(-bound, bound + step / 2, step)
    approx = np.polynomial.polynomial.polyval(xs, poly.coefficients)
    return float(np.max(np.abs(approx - np.maximum(xs, 0.0))))


def find_valid_interval(
    error_bound: float, poly: ReluPoly = DEFAULT_RELU, step: float = 1e-3, limit: float = 4.0
) -> float:
    """Widest a such that |poly - relu| <= error_bound on the whole grid of [-a, a]"""
    xs = np.arange(0.0, limit + step / 2, step)
    err_pos = np.abs(np.polynomial.polynomial.polyval(xs, poly.coefficients) - xs)
    err_neg = np.abs(np.polynomial.polynomial.polyval(-xs, poly.coefficients))
    worst = np.maximum.accumulate(np.maximum(err_pos, err_neg))
    ok = np.nonzero(worst <= error_bound)[0]
    if ok.size == 0:
        return 0.0
    return float(xs[ok[-1]])
