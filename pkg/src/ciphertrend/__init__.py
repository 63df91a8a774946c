"""Trend-following trading decisions computed over encrypted price quotes"""

from ._version import __version__, __version_info__
from .backends import ExactSimBackend, HEBackend
from .core.backend import BackendFactory, CipherHandle, DepthTrace, EvaluationBackend
from .core.scheme import Ciphertext, CkksContext, KeyMaterial, PublicKeySet
from .decision import calibrate_threshold, o1, o2, o2_hat, threshold_orders
from .indicators import MacdStream, SignalSeries, macd, wma
from .metrics import mape
from .models import (
    Engine,
    ErrorReport,
    PriceSeries,
    Role,
    RunConfig,
    SchemeParams,
    StrategyConfig,
    VoteRule,
)
from .pipeline import Pipeline
from .prices import load_prices

__all__ = [
    "__version__",
    "__version_info__",
    "BackendFactory",
    "CipherHandle",
    "Ciphertext",
    "CkksContext",
    "DepthTrace",
    "Engine",
    "ErrorReport",
    "EvaluationBackend",
    "ExactSimBackend",
    "HEBackend",
    "KeyMaterial",
    "MacdStream",
    "Pipeline",
    "PriceSeries",
    "PublicKeySet",
    "Role",
    "RunConfig",
    "SchemeParams",
    "SignalSeries",
    "StrategyConfig",
    "VoteRule",
    "calibrate_threshold",
    "load_prices",
    "macd",
    "mape",
    "o1",
    "o2",
    "o2_hat",
    "threshold_orders",
    "wma",
]
