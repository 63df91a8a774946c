"""Arithmetic interface shared by the plaintext oracle and the backends

Indicator and decision code is written once against `Arithmetic`. The plain
implementation performs float operations in exactly the order the backend
implementation issues backend calls, so the exact-sim engine reproduces the
oracle bit for bit.
"""

from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Any, Optional, Sequence

from .backend import CipherHandle, EvaluationBackend


class Arithmetic(ABC):
    """Operations used by the indicator and decision pipelines"""

    @abstractmethod
    def add(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def sub(self, a: Any, b: Any) -> Any:
        pass

    @abstractmethod
    def negate(self, a: Any) -> Any:
        pass

    @abstractmethod
    def mul(self, a: Any, b: Any) -> Any:
        """Product of two values, rescaled"""

    @abstractmethod
    def mul_const(self, a: Any, c: float, target_scale: Optional[Fraction] = None) -> Any:
        """Product with a constant, rescaled"""

    @abstractmethod
    def add_const(self, a: Any, c: float) -> Any:
        pass

    @abstractmethod
    def weighted_sum(self, values: Sequence[Any], weights: Sequence[float]) -> Any:
        """sum(values[j] * weights[j]) accumulated left to right, one rescale"""

    @abstractmethod
    def zero_like(self, a: Any) -> Any:
        pass

    @property
    def unit_scale(self) -> Optional[Fraction]:
        return None

    def poly_block(self, baby: Sequence[Any], coeffs: Sequence[float], target=None) -> Any:
        """coeffs[0] + sum(coeffs[k] * baby[k-1]) with all terms at target scale"""
        acc = self.mul_const(baby[0], coeffs[1], target)
        for power, c in zip(baby[1:], coeffs[2:]):
            acc = self.add(acc, self.mul_const(power, c, target))
        return self.add_const(acc, coeffs[0])

    def giant_step(self, giant: Any, baby: Sequence[Any], coeffs: Sequence[float]) -> Any:
        return self.mul(giant, self.poly_block(baby, coeffs))


class PlainArithmetic(Arithmetic):
    """Float arithmetic; the reference oracle"""

    def add(self, a: float, b: float) -> float:
        return a + b

    def sub(self, a: float, b: float) -> float:
        return a - b

    def negate(self, a: float) -> float:
        return -a

    def mul(self, a: float, b: float) -> float:
        return a * b

    def mul_const(self, a: float, c: float, target_scale=None) -> float:
        return a * c

    def add_const(self, a: float, c: float) -> float:
        return a + c

    def weighted_sum(self, values: Sequence[float], weights: Sequence[float]) -> float:
        acc = values[0] * weights[0]
        for v, w in zip(values[1:], weights[1:]):
            acc = acc + v * w
        return acc

    def zero_like(self, a: float) -> float:
        return 0.0


class BackendArithmetic(Arithmetic):
    """Issues backend calls, aligning operands and rescaling after products"""

    def __init__(self, backend: EvaluationBackend):
        self.backend = backend

    @property
    def unit_scale(self) -> Fraction:
        return self.backend.params.scale

    def add(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        return self.backend.b_add(*self.backend.b_align(a, b))

    def sub(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        return self.backend.b_sub(*self.backend.b_align(a, b))

    def negate(self, a: CipherHandle) -> CipherHandle:
        return self.backend.b_negate(a)

    def mul(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        a, b = self.backend.b_align(a, b, match_scale=False)
        return self.backend.b_rescale(self.backend.b_mul(a, b))

    def mul_const(self, a: CipherHandle, c: float, target_scale=None) -> CipherHandle:
        return self.backend.b_rescale(self.backend.b_mul_plain(a, c, target_scale))

    def add_const(self, a: CipherHandle, c: float) -> CipherHandle:
        return self.backend.b_add_plain(a, c)

    def weighted_sum(
        self, values: Sequence[CipherHandle], weights: Sequence[float]
    ) -> CipherHandle:
        b = self.backend
        acc = b.b_mul_plain(values[0], weights[0])
        for v, w in zip(values[1:], weights[1:]):
            acc = b.b_add(acc, b.b_mul_plain(v, w))
        return b.b_rescale(acc)

    def zero_like(self, a: CipherHandle) -> CipherHandle:
        return self.backend.b_zero(a.level, a.scale)

    def giant_step(
        self, giant: CipherHandle, baby: Sequence[CipherHandle], coeffs: Sequence[float]
    ) -> CipherHandle:
        """Pre-scale the block so giant * block lands exactly on the unit scale"""
        block_level = min(power.level for power in baby[: len(coeffs) - 1]) - 1
        meet = min(giant.level, block_level)
        target = self.unit_scale * self.backend.params.moduli[meet] / giant.scale
        return self.mul(giant, self.poly_block(baby, coeffs, target))
