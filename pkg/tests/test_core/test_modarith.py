"""Tests for word-level modular kernels and prime search"""

import numpy as np
import pytest

from ciphertrend.core.modarith import (
    ModulusConstants,
    as_u64,
    is_prime,
    mont_mul,
    mul_shoup,
    mulhi,
    ntt_primes_below,
    ntt_primes_near,
    primitive_root_2n,
    shoup_precompute,
)

Q61 = next(ntt_primes_below(61, 16))


class TestKernels:
    """Exactness of the 64-bit kernels against Python integers"""

    def test_mulhi_matches_bigint(self, rng):
        a = rng.integers(0, 2 ** 63, size=200, dtype=np.uint64) * np.uint64(2) + np.uint64(1)
        b = rng.integers(0, 2 ** 63, size=200, dtype=np.uint64)
        got = mulhi(a, b)
        for x, y, h in zip(a, b, got):
            assert int(h) == (int(x) * int(y)) >> 64

    def test_mul_matches_bigint(self, rng):
        constants = ModulusConstants([Q61, 97])
        a = np.stack([
            rng.integers(0, Q61, size=64, dtype=np.uint64),
            rng.integers(0, 97, size=64, dtype=np.uint64),
        ])
        b = np.stack([
            rng.integers(0, Q61, size=64, dtype=np.uint64),
            rng.integers(0, 97, size=64, dtype=np.uint64),
        ])
        got = constants.mul(a, b)
        for row, q in enumerate((Q61, 97)):
            expected = [int(x) * int(y) % q for x, y in zip(a[row], b[row])]
            assert [int(v) for v in got[row]] == expected

    def test_montgomery_product(self, rng):
        constants = ModulusConstants([Q61])
        a = rng.integers(0, Q61, size=100, dtype=np.uint64)
        b = rng.integers(0, Q61, size=100, dtype=np.uint64)
        got = mont_mul(a, b, constants.q[0], constants.q_neg_inv[0])
        r_inv = pow(2 ** 64, -1, Q61)
        assert [int(v) for v in got] == [int(x) * int(y) * r_inv % Q61 for x, y in zip(a, b)]

    def test_shoup_multiplication(self, rng):
        w = 123456789123456789 % Q61
        a = rng.integers(0, Q61, size=100, dtype=np.uint64)
        got = mul_shoup(a, as_u64(w), as_u64(shoup_precompute(w, Q61)), as_u64(Q61))
        assert [int(v) for v in got] == [int(x) * w % Q61 for x in a]

    def test_add_sub_neg_wrap(self):
        constants = ModulusConstants([7])
        a = as_u64([[6, 0, 3]])
        b = as_u64([[2, 0, 5]])
        assert constants.add(a, b).tolist() == [[1, 0, 1]]
        assert constants.sub(a, b).tolist() == [[4, 0, 5]]
        assert constants.neg(a).tolist() == [[1, 0, 4]]

    def test_reduce_signed_lifts_into_every_row(self):
        constants = ModulusConstants([7, 11])
        out = constants.reduce_signed(np.array([-1, 0, 5]))
        assert out.tolist() == [[6, 0, 5], [10, 0, 5]]

    def test_mul_scalar_per_row(self):
        constants = ModulusConstants([7, 11])
        out = constants.mul_scalar(as_u64([[3, 4], [3, 4]]), [-1, 2])
        assert out.tolist() == [[4, 3], [6, 8]]

    def test_rejects_wide_or_even_modulus(self):
        with pytest.raises(ValueError):
            ModulusConstants([2 ** 62 + 1])
        with pytest.raises(ValueError):
            ModulusConstants([16])


class TestPrimes:
    """Primality and NTT-friendly prime search"""

    @pytest.mark.parametrize("n,expected", [
        (2, True), (17, True), (97, True), (561, False), (2 ** 61 - 1, True), (2 ** 61 + 1, False),
    ])
    def test_is_prime(self, n, expected):
        assert is_prime(n) is expected

    def test_primes_below_are_ntt_friendly(self):
        primes = [p for _, p in zip(range(3), ntt_primes_below(40, 1024))]
        assert len(set(primes)) == 3
        for p in primes:
            assert p < 2 ** 40
            assert p % 2048 == 1
            assert is_prime(p)

    def test_primes_near_stay_close(self):
        for _, p in zip(range(4), ntt_primes_near(30, 64)):
            assert abs(np.log2(p) - 30) < 0.01
            assert p % 128 == 1

    def test_primitive_root(self):
        assert primitive_root_2n(4, 17) == 9
        psi = primitive_root_2n(16, 97)
        assert pow(psi, 16, 97) == 96

    def test_no_root_without_ntt_prime(self):
        with pytest.raises(ValueError):
            primitive_root_2n(2, 7)
