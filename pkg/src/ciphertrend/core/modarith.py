"""Word-level modular arithmetic on uint64 arrays and prime utilities

All kernels are exact for moduli below 2**62. Arrays broadcast, so a modulus
column of shape (k, 1) reduces k residue rows at once.
"""

from typing import Iterator, List

import numpy as np

MAX_MODULUS_BITS = 62

_U32 = np.uint64(32)
_MASK32 = np.uint64(0xFFFFFFFF)
_ZERO = np.uint64(0)

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def as_u64(values) -> np.ndarray:
    return np.asarray(values, dtype=np.uint64)


def mulhi(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """High 64 bits of the 128-bit product a*b"""
    a0 = a & _MASK32
    a1 = a >> _U32
    b0 = b & _MASK32
    b1 = b >> _U32
    lo_lo = a0 * b0
    hi_lo = a1 * b0
    lo_hi = a0 * b1
    mid = (lo_lo >> _U32) + (hi_lo & _MASK32) + (lo_hi & _MASK32)
    return a1 * b1 + (hi_lo >> _U32) + (lo_hi >> _U32) + (mid >> _U32)


def add_mod(a: np.ndarray, b: np.ndarray, q: np.ndarray) -> np.ndarray:
    s = a + b
    return np.where(s >= q, s - q, s)


def sub_mod(a: np.ndarray, b: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = a + (q - b)
    return np.where(d >= q, d - q, d)


def neg_mod(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.where(a == _ZERO, a, q - a)


def shoup_precompute(w: int, q: int) -> int:
    """floor(w * 2**64 / q) for a fixed multiplicand w < q"""
    return (w << 64) // q


def shoup_table(values, moduli) -> np.ndarray:
    """Elementwise Shoup companions for a (k, ...) table of constants"""
    out = np.empty(np.shape(values), dtype=np.uint64)
    flat_out = out.reshape(len(moduli), -1)
    flat_in = np.asarray(values, dtype=np.uint64).reshape(len(moduli), -1)
    for row, q in enumerate(moduli):
        flat_out[row] = np.array(
            [shoup_precompute(int(w), q) for w in flat_in[row]], dtype=np.uint64
        )
    return out


def mul_shoup(a: np.ndarray, w: np.ndarray, w_shoup: np.ndarray, q: np.ndarray) -> np.ndarray:
    """a*w mod q for precomputed constants w"""
    q_hat = mulhi(a, w_shoup)
    r = a * w - q_hat * q
    return np.where(r >= q, r - q, r)


def mont_mul(a: np.ndarray, b: np.ndarray, q: np.ndarray, q_neg_inv: np.ndarray) -> np.ndarray:
    """Montgomery product a*b*2**-64 mod q"""
    lo = a * b
    hi = mulhi(a, b)
    m = lo * q_neg_inv
    carry = (lo != _ZERO).astype(np.uint64)
    t = hi + mulhi(m, q) + carry
    return np.where(t >= q, t - q, t)


class ModulusConstants:
    """Per-prime constants for vectorized reduction over a basis of primes"""

    def __init__(self, moduli: List[int]):
        for q in moduli:
            if q % 2 == 0 or q.bit_length() > MAX_MODULUS_BITS:
                raise ValueError(f"Modulus {q} must be odd and below 2**{MAX_MODULUS_BITS}")
        self.moduli = list(moduli)
        self.q = as_u64([[q] for q in moduli])
        self.q_neg_inv = as_u64([[(-pow(q, -1, 1 << 64)) % (1 << 64)] for q in moduli])
        self.r2 = as_u64([[pow(2, 128, q)] for q in moduli])

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """General a*b mod q for residues in [0, q)"""
        t = mont_mul(a, b, self.q, self.q_neg_inv)
        return mont_mul(t, self.r2, self.q, self.q_neg_inv)

    def mul_scalar(self, a: np.ndarray, scalars: List[int]) -> np.ndarray:
        """Multiply row i of a by scalars[i] mod q_i"""
        w = as_u64([[s % q] for s, q in zip(scalars, self.moduli)])
        ws = as_u64([[shoup_precompute(int(s % q), q)] for s, q in zip(scalars, self.moduli)])
        return mul_shoup(a, w, ws, self.q)

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return add_mod(a, b, self.q)

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return sub_mod(a, b, self.q)

    def neg(self, a: np.ndarray) -> np.ndarray:
        return neg_mod(a, self.q)

    def reduce_signed(self, values: np.ndarray) -> np.ndarray:
        """Reduce small signed int64 vectors (..., N) into every prime row (..., k, N)"""
        signed = np.asarray(values, dtype=np.int64)
        q_signed = np.asarray([[q] for q in self.moduli], dtype=np.int64)
        return np.mod(signed[..., None, :], q_signed).astype(np.uint64)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24"""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def ntt_primes_near(bits: int, ring_degree: int) -> Iterator[int]:
    """Primes q = 1 mod 2N alternating below and above 2**bits, nearest first"""
    step = 2 * ring_degree
    center = (1 << bits) // step * step + 1
    below, above = center, center + step
    while below > step or above.bit_length() <= MAX_MODULUS_BITS:
        if below > step and below.bit_length() <= MAX_MODULUS_BITS and is_prime(below):
            yield below
        if above.bit_length() <= MAX_MODULUS_BITS and is_prime(above):
            yield above
        below -= step
        above += step


def ntt_primes_below(bits: int, ring_degree: int) -> Iterator[int]:
    """Primes q = 1 mod 2N below 2**bits, largest first"""
    step = 2 * ring_degree
    candidate = ((1 << bits) - 1) // step * step + 1
    while candidate > step:
        if is_prime(candidate):
            yield candidate
        candidate -= step


def primitive_root_2n(ring_degree: int, q: int) -> int:
    """Smallest primitive 2N-th root of unity mod q"""
    order = 2 * ring_degree
    if (q - 1) % order != 0:
        raise ValueError(f"No primitive {order}-th root of unity modulo {q}")
    exponent = (q - 1) // order
    for x in range(2, q):
        psi = pow(x, exponent, q)
        if pow(psi, ring_degree, q) == q - 1:
            return psi
    raise ValueError(f"No primitive {order}-th root of unity modulo {q}")
