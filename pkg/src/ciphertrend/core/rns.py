"""Residue-number-system polynomials over a basis of NTT-friendly primes

Arrays have shape (..., k, N): one row of N residues per prime.
"""

from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .modarith import sub_mod
from .ring import forward_rows, inverse_rows, ntt_tables


class RnsBasis:
    """A list of primes with shared twiddle tables and reduction constants"""

    def __init__(self, degree: int, moduli: Tuple[int, ...]):
        self.degree = degree
        self.moduli = tuple(moduli)
        self.tables = ntt_tables(degree, self.moduli)
        self.constants = self.tables.constants
        self.q = self.constants.q

    def __len__(self) -> int:
        return len(self.moduli)

    def prefix(self, count: int) -> "RnsBasis":
        return rns_basis(self.degree, self.moduli[:count])

    def to_eval(self, a: np.ndarray) -> np.ndarray:
        return forward_rows(a, self.tables)

    def to_coeff(self, a: np.ndarray) -> np.ndarray:
        return inverse_rows(a, self.tables)

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.constants.add(a, b)

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.constants.sub(a, b)

    def neg(self, a: np.ndarray) -> np.ndarray:
        return self.constants.neg(a)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.constants.mul(a, b)

    def mul_scalar(self, a: np.ndarray, scalars: List[int]) -> np.ndarray:
        return self.constants.mul_scalar(a, scalars)

    def reduce_signed(self, values: np.ndarray) -> np.ndarray:
        return self.constants.reduce_signed(values)

    def constant(self, value: int) -> np.ndarray:
        """Evaluation form of the constant polynomial `value`"""
        rows = [[value % q] * self.degree for q in self.moduli]
        return np.array(rows, dtype=np.uint64)

    def uniform(self, rng: np.random.Generator, lead: Tuple[int, ...] = ()) -> np.ndarray:
        out = np.empty(lead + (len(self.moduli), self.degree), dtype=np.uint64)
        for row, q in enumerate(self.moduli):
            out[..., row, :] = rng.integers(0, q, size=lead + (self.degree,), dtype=np.uint64)
        return out

    def lift_rows(self, coeff_rows: np.ndarray) -> np.ndarray:
        """Reduce each coefficient row (k, N) into every prime of this basis: (k, len, N)"""
        return coeff_rows[:, None, :] % self.q

    def drop_last(self, a: np.ndarray) -> np.ndarray:
        """Divide by the last prime with rounding and drop its row

        Input is in evaluation form over this basis; output is in evaluation form
        over the basis without its last prime.
        """
        last = self.moduli[-1]
        rest = self.prefix(len(self.moduli) - 1)
        top = inverse_rows(a[..., -1:, :], ntt_tables(self.degree, (last,)))
        reduced = top % rest.q
        last_mod = np.array([[last % q] for q in rest.moduli], dtype=np.uint64)
        negative = top > np.uint64(last // 2)
        reduced = np.where(negative, sub_mod(reduced, last_mod, rest.q), reduced)
        diff = rest.sub(a[..., :-1, :], rest.to_eval(reduced))
        return rest.mul_scalar(diff, [pow(last, -1, q) for q in rest.moduli])

    def crt(self, residues: List[int]) -> int:
        """Centered integer with the given residues"""
        modulus, terms = _crt_terms(self.moduli)
        value = sum(r * t for r, t in zip(residues, terms)) % modulus
        return value - modulus if value > modulus // 2 else value


@lru_cache(maxsize=None)
def _crt_terms(moduli: Tuple[int, ...]) -> Tuple[int, Tuple[int, ...]]:
    modulus = 1
    for q in moduli:
        modulus *= q
    terms = []
    for q in moduli:
        partial = modulus // q
        terms.append(partial * pow(partial, -1, q))
    return modulus, tuple(terms)


@lru_cache(maxsize=None)
def rns_basis(degree: int, moduli: Tuple[int, ...]) -> RnsBasis:
    return RnsBasis(degree, moduli)
