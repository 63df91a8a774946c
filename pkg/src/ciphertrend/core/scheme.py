"""Leveled approximate-arithmetic encryption over an RNS modulus chain

Ciphertexts live in evaluation form so additions and products are pointwise.
Only rescaling and relinearization leave it, to reach coefficient residues.
Values are encoded as a scalar in the constant coefficient with the remaining
coefficients zero.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np
import structlog

from ..errors import (
    AlignmentError,
    ConfidentialityError,
    DepthExhaustedError,
    EncodingError,
    HeadroomError,
    ParameterError,
)
from ..models import SchemeParams
from .rns import RnsBasis, rns_basis

logger = structlog.get_logger()

SCALE_TOLERANCE = Fraction(1, 2 ** 30)

Scale = Union[int, float, Fraction]


def scales_match(a: Fraction, b: Fraction) -> bool:
    """Relative agreement within 2**-30"""
    return abs(a - b) <= SCALE_TOLERANCE * max(abs(a), abs(b))


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PlaintextPoly:
    """Encoded value: residues over q_0..q_level, its scale and level"""
    poly: np.ndarray
    level: int
    scale: Fraction
    evaluation: bool = True
    value: Optional[int] = None


@dataclass(frozen=True)
class Ciphertext:
    """Two (three before relinearization) evaluation-form components"""
    components: np.ndarray
    level: int
    scale: Fraction

    @property
    def size(self) -> int:
        return self.components.shape[0]

    @property
    def degree(self) -> int:
        return self.components.shape[-1]


@dataclass(frozen=True)
class SecretKey:
    poly: np.ndarray


@dataclass(frozen=True)
class PublicKey:
    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class RelinKey:
    """One key-switching pair per chain prime, over the chain plus the special prime"""
    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class PublicKeySet:
    """Everything a blind evaluator may hold"""
    public: PublicKey
    relin: RelinKey


@dataclass(frozen=True)
class KeyMaterial:
    secret: SecretKey
    public: PublicKey
    relin: RelinKey

    def public_set(self) -> PublicKeySet:
        return PublicKeySet(public=self.public, relin=self.relin)


class CkksContext:
    """Scheme operations bound to one parameter set"""

    def __init__(self, params: SchemeParams, rng: Optional[np.random.Generator] = None):
        self.params = params
        self.degree = params.ring_degree
        self.chain = rns_basis(self.degree, tuple(params.moduli))
        self.extended = rns_basis(self.degree, tuple(params.moduli) + (params.special_modulus,))
        self.rng = rng or np.random.default_rng()
        self.logger = logger.bind(component="scheme", ring_degree=self.degree)

    # bases

    def basis_at(self, level: int) -> RnsBasis:
        return self.chain.prefix(level + 1)

    def extended_at(self, level: int) -> RnsBasis:
        moduli = tuple(self.params.moduli[: level + 1]) + (self.params.special_modulus,)
        return rns_basis(self.degree, moduli)

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= len(self.params.moduli) - 1:
            raise ParameterError(f"Level {level} outside [0, {len(self.params.moduli) - 1}]")

    # sampling

    def _ternary(self, lead=()) -> np.ndarray:
        return self.rng.integers(-1, 2, size=lead + (self.degree,))

    def _gaussian(self, lead=()) -> np.ndarray:
        return np.rint(self.rng.normal(0.0, self.params.sigma, size=lead + (self.degree,)))

    # keys

    def keygen(self) -> KeyMaterial:
        ext = self.extended
        top = len(self.params.moduli)
        s = ext.to_eval(ext.reduce_signed(self._ternary()))

        a = ext.uniform(self.rng)
        e = ext.to_eval(ext.reduce_signed(self._gaussian()))
        b = ext.add(ext.neg(ext.mul(a, s)), e)
        public = PublicKey(b=_frozen(b[:top].copy()), a=_frozen(a[:top].copy()))

        s2 = ext.mul(s, s)
        ra = ext.uniform(self.rng, lead=(top,))
        re = ext.to_eval(ext.reduce_signed(self._gaussian(lead=(top,))))
        rb = ext.add(ext.neg(ext.mul(ra, s)), re)
        special = self.params.special_modulus
        for j, q in enumerate(self.params.moduli):
            single = rns_basis(self.degree, (q,))
            gadget = single.mul_scalar(s2[j:j + 1], [special])
            rb[j, j] = single.add(rb[j, j:j + 1], gadget)[0]
        self.logger.debug("Generated key material", levels=top)
        return KeyMaterial(
            secret=SecretKey(_frozen(s)),
            public=public,
            relin=RelinKey(b=_frozen(rb), a=_frozen(ra)),
        )

    # encoding

    def encode(
        self, x: float, level: Optional[int] = None, scale: Optional[Scale] = None
    ) -> PlaintextPoly:
        level = self.params.top_level if level is None else level
        self._check_level(level)
        scale = Fraction(scale) if scale is not None else self.params.scale
        if scale <= 0:
            raise EncodingError(f"Scale must be positive, got {scale}")
        if not math.isfinite(x):
            raise EncodingError(f"Cannot encode non-finite value {x}")
        value = round(Fraction(x) * scale)
        if 2 * abs(value) >= self.params.modulus_at(level):
            raise EncodingError(f"Scaled value {x} exceeds headroom at level {level}")
        poly = _frozen(self.basis_at(level).constant(value))
        return PlaintextPoly(poly=poly, level=level, scale=scale, value=value)

    def decode(self, pt: PlaintextPoly) -> float:
        basis = self.basis_at(pt.level)
        coeffs = basis.to_coeff(pt.poly) if pt.evaluation else pt.poly
        centered = basis.crt([int(r) for r in coeffs[:, 0]])
        return float(Fraction(centered) / pt.scale)

    # encryption

    def encrypt(self, pk: PublicKey, pt: PlaintextPoly) -> Ciphertext:
        self._check_level(pt.level)
        basis = self.basis_at(pt.level)
        k = pt.level + 1
        v = basis.to_eval(basis.reduce_signed(self._ternary()))
        noise = basis.to_eval(basis.reduce_signed(self._gaussian(lead=(2,))))
        c0 = basis.add(basis.add(basis.mul(pk.b[:k], v), noise[0]), pt.poly)
        c1 = basis.add(basis.mul(pk.a[:k], v), noise[1])
        return Ciphertext(_frozen(np.stack((c0, c1))), pt.level, pt.scale)

    def decrypt(self, sk: Optional[SecretKey], ct: Ciphertext) -> PlaintextPoly:
        if sk is None:
            raise ConfidentialityError("Decryption requires the secret key")
        basis = self.basis_at(ct.level)
        s = sk.poly[: ct.level + 1]
        acc = ct.components[ct.size - 1]
        for i in range(ct.size - 2, -1, -1):
            acc = basis.add(basis.mul(acc, s), ct.components[i])
        return PlaintextPoly(
            poly=_frozen(basis.to_coeff(acc)),
            level=ct.level,
            scale=ct.scale,
            evaluation=False,
        )

    def decrypt_value(self, sk: Optional[SecretKey], ct: Ciphertext) -> float:
        return self.decode(self.decrypt(sk, ct))

    # evaluation

    @staticmethod
    def _check_aligned(a: Ciphertext, b: Union[Ciphertext, PlaintextPoly], op: str) -> None:
        if a.level != b.level:
            raise AlignmentError(f"{op}: level mismatch {a.level} != {b.level}")
        if not scales_match(a.scale, b.scale):
            raise AlignmentError(f"{op}: scale mismatch {float(a.scale)} != {float(b.scale)}")

    def _check_headroom(self, level: int, scale: Fraction, op: str) -> None:
        if 2 * scale >= self.params.modulus_at(level):
            raise HeadroomError(f"{op}: scale 2^{math.log2(scale):.1f} exceeds level {level}")

    def _combine(self, a: Ciphertext, b: Ciphertext, fn) -> Ciphertext:
        basis = self.basis_at(a.level)
        size = max(a.size, b.size)
        zero = np.zeros_like(a.components[0])
        comps = [
            fn(
                basis,
                a.components[i] if i < a.size else zero,
                b.components[i] if i < b.size else zero,
            )
            for i in range(size)
        ]
        return Ciphertext(_frozen(np.stack(comps)), a.level, a.scale)

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_aligned(a, b, "he_add")
        return self._combine(a, b, lambda basis, x, y: basis.add(x, y))

    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_aligned(a, b, "he_sub")
        return self._combine(a, b, lambda basis, x, y: basis.sub(x, y))

    def negate(self, a: Ciphertext) -> Ciphertext:
        basis = self.basis_at(a.level)
        return Ciphertext(_frozen(basis.neg(a.components)), a.level, a.scale)

    def add_plain(self, a: Ciphertext, pt: PlaintextPoly) -> Ciphertext:
        self._check_aligned(a, pt, "he_add_plain")
        basis = self.basis_at(a.level)
        comps = a.components.copy()
        comps[0] = basis.add(comps[0], pt.poly)
        return Ciphertext(_frozen(comps), a.level, a.scale)

    def mul_plain(self, a: Ciphertext, pt: PlaintextPoly) -> Ciphertext:
        if a.level != pt.level:
            raise AlignmentError(f"he_mul_plain: level mismatch {a.level} != {pt.level}")
        scale = a.scale * pt.scale
        self._check_headroom(a.level, scale, "he_mul_plain")
        basis = self.basis_at(a.level)
        if pt.value is not None:
            comps = basis.mul_scalar(a.components, [pt.value] * len(basis))
        else:
            comps = basis.mul(a.components, pt.poly)
        return Ciphertext(_frozen(comps), a.level, scale)

    def tensor(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        """Three-component product, not yet relinearized"""
        if a.level != b.level:
            raise AlignmentError(f"he_mul: level mismatch {a.level} != {b.level}")
        if a.size != 2 or b.size != 2:
            raise AlignmentError("he_mul expects relinearized operands")
        if a.level == 0:
            raise DepthExhaustedError("he_mul", 0)
        scale = a.scale * b.scale
        self._check_headroom(a.level, scale, "he_mul")
        basis = self.basis_at(a.level)
        a0, a1 = a.components
        b0, b1 = b.components
        d0 = basis.mul(a0, b0)
        d1 = basis.add(basis.mul(a0, b1), basis.mul(a1, b0))
        d2 = basis.mul(a1, b1)
        return Ciphertext(_frozen(np.stack((d0, d1, d2))), a.level, scale)

    def relinearize(self, ct: Ciphertext, rlk: RelinKey) -> Ciphertext:
        if ct.size == 2:
            return ct
        level = ct.level
        basis = self.basis_at(level)
        ext = self.extended_at(level)
        rows = list(range(level + 1)) + [len(self.params.moduli)]
        digits = ext.to_eval(ext.lift_rows(basis.to_coeff(ct.components[2])))
        key_b = rlk.b[: level + 1][:, rows]
        key_a = rlk.a[: level + 1][:, rows]
        acc_b = ext.mul(digits[0], key_b[0])
        acc_a = ext.mul(digits[0], key_a[0])
        for j in range(1, level + 1):
            acc_b = ext.add(acc_b, ext.mul(digits[j], key_b[j]))
            acc_a = ext.add(acc_a, ext.mul(digits[j], key_a[j]))
        c0 = basis.add(ct.components[0], ext.drop_last(acc_b))
        c1 = basis.add(ct.components[1], ext.drop_last(acc_a))
        return Ciphertext(_frozen(np.stack((c0, c1))), level, ct.scale)

    def mul(self, a: Ciphertext, b: Ciphertext, rlk: RelinKey) -> Ciphertext:
        return self.relinearize(self.tensor(a, b), rlk)

    def rescale(self, a: Ciphertext) -> Ciphertext:
        if a.level == 0:
            raise DepthExhaustedError("rescale", 0)
        dropped = self.params.moduli[a.level]
        comps = self.basis_at(a.level).drop_last(a.components)
        return Ciphertext(_frozen(comps), a.level - 1, a.scale / dropped)

    def mod_switch_to(self, a: Ciphertext, level: int) -> Ciphertext:
        if level < 0 or level > a.level:
            raise AlignmentError(f"Cannot switch level {a.level} to {level}")
        if level == a.level:
            return a
        return Ciphertext(_frozen(a.components[:, : level + 1].copy()), level, a.scale)
