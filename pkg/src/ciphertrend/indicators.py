"""Weighted moving average and MACD over plain or encrypted series

Series follow the length convention out = in - n: the newest input never
completes a window. Offsets record the price index of each series' first value.
"""

from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import structlog

from .core.arithmetic import Arithmetic, BackendArithmetic, PlainArithmetic
from .core.backend import CipherHandle, EvaluationBackend
from .errors import ParameterError

logger = structlog.get_logger()

DEFAULT_WINDOWS = (12, 26, 9)


@dataclass
class SignalSeries:
    """Time-aligned indicator values with their price-index offset"""
    values: List[Any]
    offset: int = 0
    window: Optional[int] = None
    name: str = ""

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def price_index(self, i: int) -> int:
        return self.offset + i


@dataclass
class MacdResult:
    """Every intermediate series of one MACD evaluation"""
    alpha: SignalSeries
    beta: SignalSeries
    theta: SignalSeries
    gamma: SignalSeries
    m: SignalSeries
    windows: Tuple[int, int, int] = DEFAULT_WINDOWS


def wma_weights(n: int) -> List[float]:
    """Linearly increasing weights 2(i+1)/(n(n+1))"""
    if n < 1:
        raise ParameterError(f"Window size must be positive, got {n}")
    denom = n * (n + 1)
    return [2 * (i + 1) / denom for i in range(n)]


def _ops_for(engine) -> Arithmetic:
    if engine is None:
        return PlainArithmetic()
    if isinstance(engine, Arithmetic):
        return engine
    if isinstance(engine, EvaluationBackend):
        return BackendArithmetic(engine)
    raise TypeError(f"Unsupported arithmetic: {type(engine).__name__}")


def _as_series(values, offset: int = 0) -> SignalSeries:
    return values if isinstance(values, SignalSeries) else SignalSeries(list(values), offset)


def wma(c, n: int, engine=None, name: str = "wma") -> SignalSeries:
    """WMA with window n; engine is None (plain), a backend, or an Arithmetic"""
    series = _as_series(c)
    weights = wma_weights(n)
    if len(series) <= n:
        raise ParameterError(f"WMA window {n} needs more than {n} values, got {len(series)}")
    ops = _ops_for(engine)
    out = [ops.weighted_sum(series.values[i:i + n], weights) for i in range(len(series) - n)]
    return SignalSeries(out, series.offset + n, n, name)


def wma_plain(values: Sequence[float], n: int) -> List[float]:
    return wma(values, n).values


def _check_windows(windows: Tuple[int, int, int]) -> None:
    n1, n2, n3 = windows
    if min(windows) < 1 or n1 >= n2:
        raise ParameterError(f"Invalid MACD windows {windows}")


def macd(d, engine=None, windows: Tuple[int, int, int] = DEFAULT_WINDOWS) -> MacdResult:
    """MACD line m = theta - wma(theta) with theta the fast/slow WMA gap"""
    _check_windows(windows)
    n1, n2, n3 = windows
    series = _as_series(d)
    if len(series) <= n2 + n3:
        raise ParameterError(f"MACD needs more than {n2 + n3} values, got {len(series)}")
    ops = _ops_for(engine)
    alpha = wma(series, n1, ops, "alpha")
    beta = wma(series, n2, ops, "beta")
    shift = n2 - n1
    theta = SignalSeries(
        [ops.sub(alpha[shift + i], beta[i]) for i in range(len(beta))],
        beta.offset,
        name="theta",
    )
    gamma = wma(theta, n3, ops, "gamma")
    m = SignalSeries(
        [ops.sub(theta[n3 + i], gamma[i]) for i in range(len(gamma))],
        gamma.offset,
        name="m",
    )
    return MacdResult(alpha, beta, theta, gamma, m, windows)


def macd_plain(
    values: Sequence[float], windows: Tuple[int, int, int] = DEFAULT_WINDOWS
) -> List[float]:
    return macd(values, None, windows).m.values


def decrypt_series(backend: EvaluationBackend, series: SignalSeries) -> List[float]:
    return [backend.b_decrypt(h) for h in series.values]


@dataclass
class MacdStream:
    """Incremental MACD: one quote in, at most one new MACD value out

    Produces the same values as `macd` on the quotes pushed so far.
    """
    ops: Arithmetic
    windows: Tuple[int, int, int] = DEFAULT_WINDOWS
    quotes: List[Any] = field(default_factory=list)
    alpha: List[Any] = field(default_factory=list)
    beta: List[Any] = field(default_factory=list)
    theta: List[Any] = field(default_factory=list)
    gamma: List[Any] = field(default_factory=list)
    m: List[Any] = field(default_factory=list)

    def __post_init__(self):
        _check_windows(self.windows)
        n1, n2, n3 = self.windows
        self._weights = (wma_weights(n1), wma_weights(n2), wma_weights(n3))

    @classmethod
    def for_backend(cls, backend: EvaluationBackend, windows=DEFAULT_WINDOWS) -> "MacdStream":
        return cls(BackendArithmetic(backend), windows)

    def push(self, quote: Any) -> Optional[Any]:
        n1, n2, n3 = self.windows
        w1, w2, w3 = self._weights
        self.quotes.append(quote)
        k = len(self.quotes)
        if k > n1:
            self.alpha.append(self.ops.weighted_sum(self.quotes[k - n1 - 1:k - 1], w1))
        if k > n2:
            self.beta.append(self.ops.weighted_sum(self.quotes[k - n2 - 1:k - 1], w2))
            self.theta.append(self.ops.sub(self.alpha[-1], self.beta[-1]))
        j = len(self.theta)
        if j > n3:
            self.gamma.append(self.ops.weighted_sum(self.theta[j - n3 - 1:j - 1], w3))
            self.m.append(self.ops.sub(self.theta[-1], self.gamma[-1]))
            return self.m[-1]
        return None

    def trim(self, keep: int = 2) -> None:
        """Drop history no future push can reach"""
        n1, n2, n3 = self.windows
        del self.quotes[: max(0, len(self.quotes) - n2 - 1)]
        del self.alpha[:-1]
        del self.beta[:-1]
        del self.theta[: max(0, len(self.theta) - n3 - 1)]
        del self.gamma[:-1]
        del self.m[: max(0, len(self.m) - keep)]
