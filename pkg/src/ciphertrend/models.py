"""Data models for ciphertrend"""

import math
from datetime import date
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core.modarith import MAX_MODULUS_BITS, is_prime, ntt_primes_below, ntt_primes_near


class Engine(str, Enum):
    """Evaluation engines"""
    ORACLE = "oracle"
    EXACT = "exact-sim"
    HE = "he"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.strip().lower() == "exact":
            return cls.EXACT
        return None


class Role(str, Enum):
    """Process roles"""
    LOCAL = "local"
    AGGREGATOR = "aggregator"
    TRADER = "trader"


class VoteRule(str, Enum):
    """How the aggregator merges trader orders for one tick"""
    MAJORITY = "majority"
    UNANIMOUS = "unanimous"
    SUM = "sum"


class Provenance(str, Enum):
    """Where a decision value came from"""
    ENCRYPTED = "encrypted"
    ORACLE = "oracle"


class TimingBand(str, Enum):
    """Per-quote wall time against the desktop budget"""
    WITHIN = "within"
    REPORTED = "reported"
    EXCEEDED = "exceeded"


@lru_cache(maxsize=32)
def _generate_chain(
    ring_degree: int,
    first_bits: int,
    middle_bits: int,
    middle_count: int,
    last_bits: int,
    special_bits: int,
) -> Tuple[Tuple[int, ...], int]:
    used = set()

    def take(candidates):
        for q in candidates:
            if q not in used:
                used.add(q)
                return q
        raise ValueError("Ran out of NTT-friendly primes")

    first = take(ntt_primes_below(first_bits, ring_degree))
    near = ntt_primes_near(middle_bits, ring_degree)
    middle = [take(near) for _ in range(middle_count)]
    last = take(ntt_primes_below(last_bits, ring_degree))
    special = take(ntt_primes_below(special_bits, ring_degree))
    return (first, *middle, last), special


class SchemeParams(BaseModel):
    """Leveled scheme parameters: ring, modulus chain, scale, noise and depth budget"""
    model_config = ConfigDict(frozen=True)

    ring_degree: int = Field(ge=2)
    moduli: Tuple[int, ...]
    special_modulus: int
    scale_bits: int = Field(ge=1, le=60)
    sigma: float = Field(default=3.2, gt=0.0)
    depth_budget: int = Field(ge=1)

    @field_validator("ring_degree")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v & (v - 1):
            raise ValueError(f"ring_degree must be a power of two, got {v}")
        return v

    @model_validator(mode="after")
    def _check_chain(self) -> "SchemeParams":
        if len(self.moduli) < 2:
            raise ValueError("modulus chain needs at least two primes")
        primes = list(self.moduli) + [self.special_modulus]
        if len(set(primes)) != len(primes):
            raise ValueError("modulus chain primes must be distinct")
        for q in primes:
            if q.bit_length() > MAX_MODULUS_BITS or not is_prime(q):
                raise ValueError(f"{q} is not a prime below 2**{MAX_MODULUS_BITS}")
            if (q - 1) % (2 * self.ring_degree):
                raise ValueError(f"{q} is not 1 mod {2 * self.ring_degree}")
        for q in self.moduli[1:-1]:
            if abs(math.log2(q) - self.scale_bits) > 1.0:
                raise ValueError(f"middle prime {q} is not within 2^+-1 of the scale")
        if self.special_modulus <= max(self.moduli):
            raise ValueError("special modulus must exceed every chain prime")
        if self.depth_budget > len(self.moduli) - 1:
            raise ValueError(
                f"depth_budget {self.depth_budget} exceeds chain length {len(self.moduli)}"
            )
        return self

    @property
    def scale(self) -> Fraction:
        return Fraction(2 ** self.scale_bits)

    @property
    def top_level(self) -> int:
        return self.depth_budget

    def modulus_at(self, level: int) -> int:
        """Product of q_0..q_level"""
        return math.prod(self.moduli[: level + 1])

    @classmethod
    def generate(
        cls,
        ring_degree: int = 8192,
        first_bits: int = 60,
        middle_bits: int = 40,
        middle_count: int = 10,
        last_bits: int = 60,
        special_bits: int = 61,
        scale_bits: Optional[int] = None,
        sigma: float = 3.2,
        depth_budget: Optional[int] = None,
    ) -> "SchemeParams":
        """Derive a deterministic chain of NTT-friendly primes for a bit layout"""
        moduli, special = _generate_chain(
            ring_degree, first_bits, middle_bits, middle_count, last_bits, special_bits
        )
        return cls(
            ring_degree=ring_degree,
            moduli=moduli,
            special_modulus=special,
            scale_bits=scale_bits or middle_bits,
            sigma=sigma,
            depth_budget=depth_budget if depth_budget is not None else len(moduli) - 1,
        )

    @classmethod
    def default(cls) -> "SchemeParams":
        return cls.generate()

    def summary(self) -> Dict[str, Any]:
        return {
            "ring_degree": self.ring_degree,
            "modulus_bits": [q.bit_length() for q in self.moduli],
            "special_modulus_bits": self.special_modulus.bit_length(),
            "scale_bits": self.scale_bits,
            "sigma": self.sigma,
            "depth_budget": self.depth_budget,
        }


class StrategyConfig(BaseModel):
    """Indicator and decision settings shared by local runs and traders"""
    model_config = ConfigDict(frozen=True)

    windows: Tuple[int, int, int] = (12, 26, 9)
    normalization: float = Field(default=100.0, gt=0.0)
    threshold: Optional[float] = Field(default=None, gt=0.0)
    min_history: int = Field(default=45, ge=2)
    vote_rule: VoteRule = VoteRule.MAJORITY
    tick_timeout: float = Field(default=30.0, gt=0.0)

    @field_validator("windows")
    @classmethod
    def _check_windows(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(n < 1 for n in v):
            raise ValueError("windows must be positive")
        if v[0] >= v[1]:
            raise ValueError("fast window must be shorter than slow window")
        return v

    @property
    def macd_offset(self) -> int:
        """Price index of the first MACD value"""
        return self.windows[1] + self.windows[2]


class PriceSeries(BaseModel):
    """Validated daily closes"""
    model_config = ConfigDict(frozen=True)

    MIN_LENGTH: ClassVar[int] = 45

    ticker: str = "AAPL"
    dates: List[date]
    closes: List[float]

    @model_validator(mode="after")
    def _check_series(self) -> "PriceSeries":
        if len(self.dates) != len(self.closes):
            raise ValueError("dates and closes differ in length")
        if len(self.closes) < self.MIN_LENGTH:
            raise ValueError(f"need at least {self.MIN_LENGTH} prices, got {len(self.closes)}")
        for i, close in enumerate(self.closes):
            if not close > 0 or not math.isfinite(close):
                raise ValueError(f"price at index {i} is not positive: {close}")
        for i in range(1, len(self.dates)):
            if self.dates[i] <= self.dates[i - 1]:
                raise ValueError(f"dates not strictly increasing at index {i}")
        return self

    def __len__(self) -> int:
        return len(self.closes)

    def normalized(self, normalization: float) -> List[float]:
        return [c / normalization for c in self.closes]

    def date_at(self, index: int) -> str:
        return self.dates[index].isoformat()


class MapeResult(BaseModel):
    """Both forms of the percentage error plus guard bookkeeping"""
    signed_sum: float
    normalized: float = Field(ge=0.0)
    count: int = Field(ge=0)
    excluded: int = Field(ge=0)


class OrderAgreement(BaseModel):
    """Thresholded decisions compared with exact crossing orders"""
    crossings: int = 0
    matched: int = 0
    missed: int = 0
    spurious: int = 0


class ErrorReport(BaseModel):
    """Per-stage errors and timings of one engine against the oracle"""
    engine: Engine
    wma: MapeResult
    macd: MapeResult
    decision: MapeResult
    timings: Dict[str, float] = Field(default_factory=dict)
    params: Dict[str, Any] = Field(default_factory=dict)
    depth_consumed: int = 0
    threshold: Optional[float] = None
    agreement: Optional[OrderAgreement] = None
    interval_violations: int = 0
    within_budget: bool = True
    timing_band: TimingBand = TimingBand.WITHIN


class DecisionRecord(BaseModel):
    """Decision outcome for one tick"""
    index: int
    date: str
    o1: int = Field(ge=-1, le=1)
    o2: int = Field(ge=-1, le=1)
    o2hat_plain: float
    o2hat_decrypted: Optional[float] = None
    order: int = Field(ge=-1, le=1)
    provenance: Provenance = Provenance.ORACLE


class TraderIdentity(BaseModel):
    """Trader id bound to the fingerprint of its public key"""
    model_config = ConfigDict(frozen=True)

    trader_id: str = Field(min_length=1, max_length=64)
    fingerprint: str


class OrderLogEntry(BaseModel):
    """One row of the aggregator's order log"""
    tick: int
    date: str
    votes: Dict[str, str] = Field(default_factory=dict)
    final_order: int = Field(ge=-1, le=1)

    def votes_field(self) -> str:
        return "|".join(f"{k}:{v}" for k, v in sorted(self.votes.items()))


class RunConfig(BaseModel):
    """Resolved settings for one process"""
    model_config = ConfigDict(frozen=True)

    input: Optional[Path] = None
    engines: Tuple[Engine, ...] = (Engine.HE,)
    role: Role = Role.LOCAL
    addr: str = "127.0.0.1:9870"
    scheme: SchemeParams = Field(default_factory=SchemeParams.default)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    out: Path = Path("out")
    seed: Optional[int] = Field(default=None, ge=0)
    noise_stddev: float = Field(default=0.0, ge=0.0)
    traders: int = Field(default=1, ge=0)
    trader_id: Optional[str] = Field(default=None, min_length=1, max_length=64)
    connect_attempts: int = Field(default=5, ge=1)
    startup_timeout: float = Field(default=60.0, gt=0.0)

    @field_validator("engines")
    @classmethod
    def _check_engines(cls, v: Tuple[Engine, ...]) -> Tuple[Engine, ...]:
        if not v:
            raise ValueError("at least one engine is required")
        return tuple(dict.fromkeys(v))

    @field_validator("addr")
    @classmethod
    def _check_addr(cls, v: str) -> str:
        host, sep, port = v.rpartition(":")
        if not sep or not host or not port.isdigit() or int(port) > 65535:
            raise ValueError(f"address must be host:port, got {v!r}")
        return v

    @property
    def engine(self) -> Engine:
        """Primary engine: the one whose outputs are written"""
        return self.engines[0]

    @property
    def host(self) -> str:
        return self.addr.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.addr.rpartition(":")[2])
