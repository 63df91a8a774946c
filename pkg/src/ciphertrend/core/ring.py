"""Negacyclic polynomial ring Z_q[X]/(X^N+1) with NTT multiplication"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from ..errors import ParameterError
from .modarith import (
    MAX_MODULUS_BITS,
    ModulusConstants,
    add_mod,
    is_prime,
    mul_shoup,
    primitive_root_2n,
    shoup_table,
    sub_mod,
)


class Domain(str, Enum):
    """Representation of a ring element"""
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


@dataclass(frozen=True)
class RingParams:
    """Ring degree and a single prime modulus"""
    degree: int
    modulus: int

    def __post_init__(self):
        n = self.degree
        if n < 2 or n & (n - 1):
            raise ParameterError(f"Ring degree must be a power of two >= 2, got {n}")
        q = self.modulus
        if q < 3 or q % 2 == 0 or q.bit_length() > MAX_MODULUS_BITS or not is_prime(q):
            raise ParameterError(f"Modulus must be an odd prime below 2**62, got {q}")

    @property
    def has_ntt(self) -> bool:
        return (self.modulus - 1) % (2 * self.degree) == 0


@dataclass(frozen=True)
class NttTables:
    """Twiddle tables for a stack of primes sharing one ring degree"""
    degree: int
    constants: ModulusConstants
    psi: np.ndarray
    psi_shoup: np.ndarray
    psi_inv: np.ndarray
    psi_inv_shoup: np.ndarray
    n_inv: np.ndarray
    n_inv_shoup: np.ndarray


def _bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


@lru_cache(maxsize=None)
def _prime_twiddles(degree: int, q: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    try:
        psi = primitive_root_2n(degree, q)
    except ValueError as exc:
        raise ParameterError(str(exc)) from exc
    psi_inv = pow(psi, -1, q)
    bits = degree.bit_length() - 1
    order = [_bit_reverse(i, bits) for i in range(degree)]
    forward = tuple(pow(psi, e, q) for e in order)
    inverse = tuple(pow(psi_inv, e, q) for e in order)
    return forward, inverse


@lru_cache(maxsize=None)
def ntt_tables(degree: int, moduli: Tuple[int, ...]) -> NttTables:
    """Build (or fetch) twiddle tables for the given primes"""
    forward = np.array([_prime_twiddles(degree, q)[0] for q in moduli], dtype=np.uint64)
    inverse = np.array([_prime_twiddles(degree, q)[1] for q in moduli], dtype=np.uint64)
    n_inv = np.array([[pow(degree, -1, q)] for q in moduli], dtype=np.uint64)
    tables = NttTables(
        degree=degree,
        constants=ModulusConstants(list(moduli)),
        psi=forward,
        psi_shoup=shoup_table(forward, moduli),
        psi_inv=inverse,
        psi_inv_shoup=shoup_table(inverse, moduli),
        n_inv=n_inv,
        n_inv_shoup=shoup_table(n_inv, moduli),
    )
    for table in (tables.psi, tables.psi_shoup, tables.psi_inv, tables.psi_inv_shoup):
        table.setflags(write=False)
    return tables


def forward_rows(a: np.ndarray, tables: NttTables) -> np.ndarray:
    """Forward negacyclic NTT over the last axis of a (..., k, N) residue array"""
    n = tables.degree
    lead = a.shape[:-1]
    q = tables.constants.q[..., None]
    m, step = 1, n
    while m < n:
        step //= 2
        a = a.reshape(lead + (m, 2, step))
        w = tables.psi[:, m:2 * m, None]
        ws = tables.psi_shoup[:, m:2 * m, None]
        u = a[..., 0, :]
        v = mul_shoup(a[..., 1, :], w, ws, q)
        a = np.stack((add_mod(u, v, q), sub_mod(u, v, q)), axis=-2)
        m *= 2
    return a.reshape(lead + (n,))


def inverse_rows(a: np.ndarray, tables: NttTables) -> np.ndarray:
    """Inverse of forward_rows"""
    n = tables.degree
    lead = a.shape[:-1]
    q = tables.constants.q[..., None]
    m, step = n, 1
    while m > 1:
        h = m // 2
        a = a.reshape(lead + (h, 2, step))
        w = tables.psi_inv[:, h:m, None]
        ws = tables.psi_inv_shoup[:, h:m, None]
        u = a[..., 0, :]
        v = a[..., 1, :]
        a = np.stack((add_mod(u, v, q), mul_shoup(sub_mod(u, v, q), w, ws, q)), axis=-2)
        step *= 2
        m = h
    a = a.reshape(lead + (n,))
    return mul_shoup(a, tables.n_inv, tables.n_inv_shoup, tables.constants.q)


@dataclass(frozen=True)
class RingElement:
    """Element of Z_q[X]/(X^N+1) in coefficient or evaluation form"""
    coefficients: np.ndarray
    params: RingParams
    domain: Domain = Domain.COEFFICIENT

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=np.uint64)
        if coeffs.shape != (self.params.degree,):
            raise ParameterError(
                f"Expected {self.params.degree} coefficients, got shape {coeffs.shape}"
            )
        if np.any(coeffs >= np.uint64(self.params.modulus)):
            raise ParameterError("Coefficients must be reduced modulo q")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_ints(cls, values, params: RingParams) -> "RingElement":
        """Reduce arbitrary (possibly negative) integers into the ring"""
        reduced = [int(v) % params.modulus for v in values]
        return cls(np.array(reduced, dtype=np.uint64), params)

    @classmethod
    def zero(cls, params: RingParams) -> "RingElement":
        return cls(np.zeros(params.degree, dtype=np.uint64), params)

    def to_list(self):
        return [int(c) for c in self.coefficients]

    def __eq__(self, other) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return (
            self.params == other.params
            and self.domain == other.domain
            and np.array_equal(self.coefficients, other.coefficients)
        )

    __hash__ = None


def _tables_for(p: RingParams) -> NttTables:
    if not p.has_ntt:
        raise ParameterError(
            f"No primitive {2 * p.degree}-th root of unity modulo {p.modulus}"
        )
    return ntt_tables(p.degree, (p.modulus,))


def _check_params(p: RingParams, *elements: RingElement) -> None:
    for element in elements:
        if element.params != p:
            raise ParameterError(f"Ring element over {element.params} used with {p}")


def ntt_forward(a: RingElement, p: RingParams) -> RingElement:
    _check_params(p, a)
    if a.domain is not Domain.COEFFICIENT:
        raise ParameterError("ntt_forward expects a coefficient-domain element")
    tables = _tables_for(p)
    out = forward_rows(a.coefficients[None, :], tables)[0]
    return RingElement(out, p, Domain.EVALUATION)


def ntt_inverse(a: RingElement, p: RingParams) -> RingElement:
    _check_params(p, a)
    if a.domain is not Domain.EVALUATION:
        raise ParameterError("ntt_inverse expects an evaluation-domain element")
    tables = _tables_for(p)
    out = inverse_rows(a.coefficients[None, :], tables)[0]
    return RingElement(out, p, Domain.COEFFICIENT)


def ring_mul(a: RingElement, b: RingElement, p: RingParams) -> RingElement:
    """Negacyclic product; result is in the domain of the first operand"""
    _check_params(p, a, b)
    tables = _tables_for(p)
    fa = a if a.domain is Domain.EVALUATION else ntt_forward(a, p)
    fb = b if b.domain is Domain.EVALUATION else ntt_forward(b, p)
    product = tables.constants.mul(fa.coefficients[None, :], fb.coefficients[None, :])[0]
    result = RingElement(product, p, Domain.EVALUATION)
    return result if a.domain is Domain.EVALUATION else ntt_inverse(result, p)


def _coefficientwise(a: RingElement, b: RingElement, op) -> RingElement:
    if a.params != b.params:
        raise ParameterError(f"Mismatched ring parameters: {a.params} vs {b.params}")
    if a.domain is not b.domain:
        raise ParameterError("Operands are in different domains")
    q = np.uint64(a.params.modulus)
    return RingElement(op(a.coefficients, b.coefficients, q), a.params, a.domain)


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    return _coefficientwise(a, b, add_mod)


def ring_sub(a: RingElement, b: RingElement) -> RingElement:
    return _coefficientwise(a, b, sub_mod)


def ring_neg(a: RingElement) -> RingElement:
    return ring_sub(RingElement(np.zeros_like(a.coefficients), a.params, a.domain), a)


def sample_ternary(p: RingParams, rng: Optional[np.random.Generator] = None) -> RingElement:
    """Uniform coefficients in {-1, 0, 1}"""
    rng = rng or np.random.default_rng()
    return RingElement.from_ints(rng.integers(-1, 2, size=p.degree), p)


def sample_gaussian(
    p: RingParams, sigma: float, rng: Optional[np.random.Generator] = None
) -> RingElement:
    """Rounded centered gaussian coefficients"""
    if not sigma > 0:
        raise ParameterError(f"Gaussian sigma must be positive, got {sigma}")
    rng = rng or np.random.default_rng()
    return RingElement.from_ints(np.rint(rng.normal(0.0, sigma, size=p.degree)), p)
