"""Evaluation backend contract with a shared level/scale ledger"""

import csv
import io
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, ClassVar, Dict, Iterator, List, Optional, Tuple, Type

import structlog

from ..errors import AlignmentError, DepthExhaustedError, HeadroomError
from ..models import Engine, SchemeParams
from .scheme import scales_match

logger = structlog.get_logger()


@dataclass(frozen=True)
class CipherHandle:
    """Engine-tagged value with its level and exact scale"""
    engine: Engine
    payload: Any
    level: int
    scale: Fraction


@dataclass(frozen=True)
class TraceEntry:
    op: str
    level_before: int
    level_after: int
    scale: Fraction

    def symbol(self) -> Tuple[str, int, int, Fraction]:
        return (self.op, self.level_before, self.level_after, self.scale)


class DepthTrace:
    """Ordered log of ledger transitions"""

    HEADER = ("op", "level_before", "level_after", "scale")

    def __init__(self, top_level: int):
        self.top_level = top_level
        self.entries: List[TraceEntry] = []

    def record(self, op: str, level_before: int, level_after: int, scale: Fraction) -> None:
        if level_after > level_before or level_after < 0:
            raise AlignmentError(f"Invalid ledger transition {op}: {level_before} -> {level_after}")
        self.entries.append(TraceEntry(op, level_before, level_after, scale))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self.entries)

    def symbols(self) -> List[Tuple[str, int, int, Fraction]]:
        return [entry.symbol() for entry in self.entries]

    def op_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.op] = counts.get(entry.op, 0) + 1
        return counts

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.HEADER)
        for e in self.entries:
            writer.writerow((e.op, e.level_before, e.level_after, f"{float(e.scale):.17g}"))
        return out.getvalue()


def max_depth_of(trace: DepthTrace) -> int:
    """Levels consumed: top level minus the lowest level reached"""
    if not trace.entries:
        return 0
    return trace.top_level - min(entry.level_after for entry in trace.entries)


class EvaluationBackend(ABC):
    """Base class for evaluation engines

    Public b_* methods validate operands, advance the ledger and record the
    trace; engines only implement the payload arithmetic. Both engines thus
    reject the same call at the same op index.
    """

    engine: ClassVar[Engine]

    def __init__(self, params: SchemeParams):
        self.params = params
        self.trace = DepthTrace(params.top_level)
        self.op_count = 0
        self.logger = logger.bind(component="backend", engine=self.engine.value)

    # engine hooks

    @abstractmethod
    def _encrypt(self, value: float, level: int, scale: Fraction) -> Any:
        pass

    @abstractmethod
    def _decrypt(self, handle: CipherHandle) -> float:
        pass

    @abstractmethod
    def _add(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def _sub(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def _negate(self, a: Any) -> Any:
        pass

    @abstractmethod
    def _add_plain(self, a: Any, value: float, level: int, scale: Fraction) -> Any:
        pass

    @abstractmethod
    def _mul_plain(self, a: Any, value: float, level: int, scale: Fraction) -> Any:
        pass

    @abstractmethod
    def _mul(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def _rescale(self, a: Any) -> Any:
        pass

    @abstractmethod
    def _mod_switch(self, a: Any, level: int) -> Any:
        pass

    @abstractmethod
    def _zero(self, level: int, scale: Fraction) -> Any:
        pass

    def _verify(self, payload: Any, level: int, scale: Fraction) -> None:
        """Engines with their own ledger check it against ours"""

    # ledger helpers

    def reset_trace(self) -> None:
        self.trace = DepthTrace(self.params.top_level)
        self.op_count = 0

    def _emit(
        self, op: str, before: int, payload: Any, level: int, scale: Fraction
    ) -> CipherHandle:
        self._verify(payload, level, scale)
        self.trace.record(op, before, level, scale)
        return CipherHandle(self.engine, payload, level, scale)

    def _begin(self, *handles: CipherHandle) -> None:
        self.op_count += 1
        for h in handles:
            if h.engine is not self.engine:
                raise AlignmentError(f"{h.engine.value} handle passed to {self.engine.value}")

    def _require_depth(self, op: str, level: int) -> None:
        if level < 1:
            raise DepthExhaustedError(op, level, self.op_count)

    def _require_headroom(self, op: str, level: int, scale: Fraction) -> None:
        if 2 * scale >= self.params.modulus_at(level):
            raise HeadroomError(f"{op}: product scale exceeds modulus at level {level}")

    @staticmethod
    def _require_aligned(op: str, a: CipherHandle, b: CipherHandle) -> None:
        if a.level != b.level:
            raise AlignmentError(f"{op}: level mismatch {a.level} != {b.level}")
        if not scales_match(a.scale, b.scale):
            raise AlignmentError(f"{op}: scale mismatch {float(a.scale)} != {float(b.scale)}")

    # public contract

    def b_encrypt(self, value: float, level: Optional[int] = None) -> CipherHandle:
        self.op_count += 1
        level = self.params.top_level if level is None else level
        scale = self.params.scale
        return self._emit("encrypt", level, self._encrypt(value, level, scale), level, scale)

    def b_decrypt(self, handle: CipherHandle) -> float:
        self._begin(handle)
        return self._decrypt(handle)

    def b_add(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        self._begin(a, b)
        self._require_aligned("add", a, b)
        return self._emit("add", a.level, self._add(a.payload, b.payload), a.level, a.scale)

    def b_sub(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        self._begin(a, b)
        self._require_aligned("sub", a, b)
        return self._emit("sub", a.level, self._sub(a.payload, b.payload), a.level, a.scale)

    def b_negate(self, a: CipherHandle) -> CipherHandle:
        self._begin(a)
        return self._emit("negate", a.level, self._negate(a.payload), a.level, a.scale)

    def b_add_plain(self, a: CipherHandle, value: float) -> CipherHandle:
        self._begin(a)
        payload = self._add_plain(a.payload, value, a.level, a.scale)
        return self._emit("add_plain", a.level, payload, a.level, a.scale)

    def b_mul_plain(
        self, a: CipherHandle, value: float, target_scale: Optional[Fraction] = None
    ) -> CipherHandle:
        """Multiply by a constant encoded so the next rescale lands on target_scale"""
        self._begin(a)
        self._require_depth("mul_plain", a.level)
        target = a.scale if target_scale is None else Fraction(target_scale)
        encode_scale = target * self.params.moduli[a.level] / a.scale
        scale = a.scale * encode_scale
        self._require_headroom("mul_plain", a.level, scale)
        payload = self._mul_plain(a.payload, value, a.level, encode_scale)
        return self._emit("mul_plain", a.level, payload, a.level, scale)

    def b_mul(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        self._begin(a, b)
        if a.level != b.level:
            raise AlignmentError(f"mul: level mismatch {a.level} != {b.level}")
        self._require_depth("mul", a.level)
        scale = a.scale * b.scale
        self._require_headroom("mul", a.level, scale)
        return self._emit("mul", a.level, self._mul(a.payload, b.payload), a.level, scale)

    def b_rescale(self, a: CipherHandle) -> CipherHandle:
        self._begin(a)
        self._require_depth("rescale", a.level)
        scale = a.scale / self.params.moduli[a.level]
        return self._emit("rescale", a.level, self._rescale(a.payload), a.level - 1, scale)

    def b_mod_switch(self, a: CipherHandle, level: int) -> CipherHandle:
        if level == a.level:
            return a
        self._begin(a)
        if level < 0 or level > a.level:
            raise AlignmentError(f"Cannot switch level {a.level} to {level}")
        return self._emit("mod_switch", a.level, self._mod_switch(a.payload, level), level, a.scale)

    def b_zero(self, level: int, scale: Optional[Fraction] = None) -> CipherHandle:
        self.op_count += 1
        scale = self.params.scale if scale is None else scale
        return self._emit("zero", level, self._zero(level, scale), level, scale)

    def b_align(self, *handles: CipherHandle, match_scale: bool = True) -> Tuple[CipherHandle, ...]:
        """Bring handles to a common level, and to a common scale unless match_scale is False

        Handles whose scale drifted by more than 2**-30 relative are corrected by
        multiplying with 1.0 at a compensating scale, which costs one level.
        """
        target = min(h.level for h in handles)
        if not match_scale:
            return tuple(self.b_mod_switch(h, target) for h in handles)
        reference = next(h for h in handles if h.level == target).scale
        mismatched = [h for h in handles if not scales_match(h.scale, reference)]
        if any(h.level == target for h in mismatched):
            self._require_depth("align", target)
            target -= 1
        aligned = []
        for h in handles:
            if scales_match(h.scale, reference):
                aligned.append(self.b_mod_switch(h, target))
            else:
                lifted = self.b_mod_switch(h, target + 1)
                aligned.append(self.b_rescale(self.b_mul_plain(lifted, 1.0, reference)))
        return tuple(aligned)


class BackendFactory:
    """Factory for evaluation backends"""

    _backends: Dict[Engine, Type[EvaluationBackend]] = {}

    @classmethod
    def register(cls, engine: Engine, backend_class: Type[EvaluationBackend]) -> None:
        cls._backends[engine] = backend_class

    @classmethod
    def create(cls, engine: Engine, params: SchemeParams, **kwargs) -> EvaluationBackend:
        backend_class = cls._backends.get(Engine(engine))
        if not backend_class:
            raise ValueError(f"Unknown engine: {engine}")
        return backend_class(params, **kwargs)

    @classmethod
    def list_engines(cls) -> List[str]:
        return [engine.value for engine in cls._backends]
