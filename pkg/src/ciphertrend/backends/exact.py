"""Exact-simulation engine: real arithmetic under the scheme's level/scale ledger"""

from fractions import Fraction
from typing import Optional

import numpy as np

from ..core.backend import BackendFactory, CipherHandle, EvaluationBackend
from ..errors import ParameterError
from ..models import Engine, SchemeParams


class ExactSimBackend(EvaluationBackend):
    """Plain float payloads with optional gaussian perturbation after each op"""

    engine = Engine.EXACT

    def __init__(
        self,
        params: SchemeParams,
        noise_stddev: float = 0.0,
        seed: Optional[int] = None,
    ):
        super().__init__(params)
        if noise_stddev < 0:
            raise ParameterError(f"noise_stddev must be non-negative, got {noise_stddev}")
        self.noise_stddev = noise_stddev
        self.rng = np.random.default_rng(seed)

    def _perturb(self, value: float) -> float:
        if self.noise_stddev:
            return value + float(self.rng.normal(0.0, self.noise_stddev))
        return value

    def _encrypt(self, value: float, level: int, scale: Fraction) -> float:
        return self._perturb(float(value))

    def _decrypt(self, handle: CipherHandle) -> float:
        return handle.payload

    def _add(self, a: float, b: float) -> float:
        return self._perturb(a + b)

    def _sub(self, a: float, b: float) -> float:
        return self._perturb(a - b)

    def _negate(self, a: float) -> float:
        return -a

    def _add_plain(self, a: float, value: float, level: int, scale: Fraction) -> float:
        return self._perturb(a + value)

    def _mul_plain(self, a: float, value: float, level: int, scale: Fraction) -> float:
        return self._perturb(a * value)

    def _mul(self, a: float, b: float) -> float:
        return self._perturb(a * b)

    def _rescale(self, a: float) -> float:
        return a

    def _mod_switch(self, a: float, level: int) -> float:
        return a

    def _zero(self, level: int, scale: Fraction) -> float:
        return 0.0


BackendFactory.register(Engine.EXACT, ExactSimBackend)
