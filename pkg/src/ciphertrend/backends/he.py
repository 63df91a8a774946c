"""Homomorphic engine backed by the leveled scheme"""

from fractions import Fraction
from typing import Optional

import numpy as np

from ..core.backend import BackendFactory, CipherHandle, EvaluationBackend
from ..core.scheme import (
    Ciphertext,
    CkksContext,
    KeyMaterial,
    PublicKeySet,
    SecretKey,
    scales_match,
)
from ..core.serialization import deserialize_ciphertext, serialize_ciphertext
from ..errors import AlignmentError, ConfidentialityError
from ..models import Engine, SchemeParams


class HEBackend(EvaluationBackend):
    """Evaluates on ciphertexts; decryption only when a secret key is supplied"""

    engine = Engine.HE

    def __init__(
        self,
        params: SchemeParams,
        keys: Optional[PublicKeySet] = None,
        secret: Optional[SecretKey] = None,
        seed: Optional[int] = None,
        context: Optional[CkksContext] = None,
    ):
        super().__init__(params)
        self.context = context or CkksContext(params, rng=np.random.default_rng(seed))
        if keys is None:
            material = self.context.keygen()
            keys, secret = material.public_set(), material.secret
        self.keys = keys
        self._secret = secret

    @classmethod
    def from_material(cls, params: SchemeParams, material: KeyMaterial, **kwargs) -> "HEBackend":
        return cls(params, keys=material.public_set(), secret=material.secret, **kwargs)

    @property
    def can_decrypt(self) -> bool:
        return self._secret is not None

    def _verify(self, payload: Ciphertext, level: int, scale: Fraction) -> None:
        if payload.level != level or not scales_match(payload.scale, scale):
            raise AlignmentError(
                f"Ciphertext ledger ({payload.level}, {float(payload.scale)}) "
                f"disagrees with backend ({level}, {float(scale)})"
            )

    def _encrypt(self, value: float, level: int, scale: Fraction) -> Ciphertext:
        pt = self.context.encode(value, level, scale)
        return self.context.encrypt(self.keys.public, pt)

    def _decrypt(self, handle: CipherHandle) -> float:
        if self._secret is None:
            raise ConfidentialityError("This backend holds no secret key")
        return self.context.decrypt_value(self._secret, handle.payload)

    def _add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self.context.add(a, b)

    def _sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self.context.sub(a, b)

    def _negate(self, a: Ciphertext) -> Ciphertext:
        return self.context.negate(a)

    def _add_plain(self, a: Ciphertext, value: float, level: int, scale: Fraction) -> Ciphertext:
        return self.context.add_plain(a, self.context.encode(value, level, a.scale))

    def _mul_plain(self, a: Ciphertext, value: float, level: int, scale: Fraction) -> Ciphertext:
        return self.context.mul_plain(a, self.context.encode(value, level, scale))

    def _mul(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self.context.mul(a, b, self.keys.relin)

    def _rescale(self, a: Ciphertext) -> Ciphertext:
        return self.context.rescale(a)

    def _mod_switch(self, a: Ciphertext, level: int) -> Ciphertext:
        return self.context.mod_switch_to(a, level)

    def _zero(self, level: int, scale: Fraction) -> Ciphertext:
        comps = np.zeros((2, level + 1, self.params.ring_degree), dtype=np.uint64)
        comps.setflags(write=False)
        return Ciphertext(comps, level, Fraction(scale))

    # wire helpers

    def export_handle(self, handle: CipherHandle) -> bytes:
        if handle.engine is not self.engine:
            raise AlignmentError(f"Cannot export a {handle.engine.value} handle")
        return serialize_ciphertext(handle.payload)

    def import_handle(self, data: bytes) -> CipherHandle:
        ct = deserialize_ciphertext(data, self.params)
        return CipherHandle(self.engine, ct, ct.level, ct.scale)


BackendFactory.register(Engine.HE, HEBackend)
