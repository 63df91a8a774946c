"""Tests for the evaluation backends and their shared ledger"""

from fractions import Fraction

import pytest

from ciphertrend.backends import ExactSimBackend, HEBackend
from ciphertrend.core.backend import BackendFactory, DepthTrace, max_depth_of
from ciphertrend.decision import o2_hat
from ciphertrend.errors import (
    AlignmentError,
    ConfidentialityError,
    DepthExhaustedError,
    ParameterError,
)
from ciphertrend.indicators import decrypt_series, macd
from ciphertrend.models import Engine, SchemeParams
from tests.helpers import TOY_LAYOUT


def run_stages(backend, quotes):
    handles = [backend.b_encrypt(q) for q in quotes]
    result = macd(handles, backend)
    decisions = o2_hat(result.m, backend)
    return result, decisions


class TestBackendFactory:
    """Engine registration"""

    def test_engines_registered(self):
        assert set(BackendFactory.list_engines()) >= {"exact-sim", "he"}

    def test_create_exact(self, small_params):
        backend = BackendFactory.create(Engine.EXACT, small_params, noise_stddev=0.0)
        assert isinstance(backend, ExactSimBackend)

    def test_oracle_is_not_a_backend(self, small_params):
        with pytest.raises(ValueError):
            BackendFactory.create(Engine.ORACLE, small_params)


class TestExactSimBackend:
    """Plain payloads under the scheme's level and scale bookkeeping"""

    def test_reproduces_oracle_bit_for_bit(self, small_params, sample_prices):
        quotes = sample_prices.normalized(100.0)
        backend = ExactSimBackend(small_params)
        result, decisions = run_stages(backend, quotes)
        oracle = macd(quotes)
        assert decrypt_series(backend, result.m) == oracle.m.values
        assert decrypt_series(backend, result.theta) == oracle.theta.values
        assert decrypt_series(backend, decisions) == o2_hat(oracle.m).values

    def test_depth_of_full_pipeline(self, small_params, sample_prices):
        backend = ExactSimBackend(small_params)
        result, decisions = run_stages(backend, sample_prices.normalized(100.0))
        assert result.m[0].level == small_params.top_level - 2
        assert 8 <= max_depth_of(backend.trace) <= 10
        assert all(h.scale > 0 for h in decisions.values)

    def test_noise_perturbs_results(self, small_params):
        backend = ExactSimBackend(small_params, noise_stddev=1e-3, seed=1)
        h = backend.b_add(backend.b_encrypt(1.0), backend.b_encrypt(2.0))
        value = backend.b_decrypt(h)
        assert value != 3.0
        assert value == pytest.approx(3.0, abs=0.05)

    def test_noise_is_reproducible_with_seed(self, small_params):
        values = []
        for _ in range(2):
            backend = ExactSimBackend(small_params, noise_stddev=1e-3, seed=5)
            values.append(backend.b_decrypt(backend.b_encrypt(1.0)))
        assert values[0] == values[1]

    def test_negative_noise_rejected(self, small_params):
        with pytest.raises(ParameterError):
            ExactSimBackend(small_params, noise_stddev=-1.0)


class TestLedger:
    """Validation shared by every engine"""

    def test_rescale_follows_dropped_prime(self, small_params):
        backend = ExactSimBackend(small_params)
        h = backend.b_encrypt(1.0)
        product = backend.b_mul(h, h)
        rescaled = backend.b_rescale(product)
        top = small_params.top_level
        assert rescaled.level == top - 1
        assert rescaled.scale == small_params.scale ** 2 / small_params.moduli[top]

    def test_mul_plain_lands_on_target_scale(self, small_params):
        backend = ExactSimBackend(small_params)
        h = backend.b_encrypt(2.0)
        out = backend.b_rescale(backend.b_mul_plain(h, 0.5))
        assert out.scale == h.scale
        assert backend.b_decrypt(out) == 1.0

    def test_align_corrects_scale_drift(self, small_params):
        backend = ExactSimBackend(small_params)
        a = backend.b_encrypt(1.0, level=5)
        b = backend.b_encrypt(2.0, level=5)
        drifted = backend.b_rescale(backend.b_mul(a, b))
        fresh = backend.b_encrypt(3.0, level=4)
        x, y = backend.b_align(drifted, fresh)
        assert x.level == y.level == 3
        assert x.scale == y.scale
        assert backend.b_decrypt(backend.b_add(x, y)) == 5.0

    def test_add_requires_alignment(self, small_params):
        backend = ExactSimBackend(small_params)
        with pytest.raises(AlignmentError):
            backend.b_add(backend.b_encrypt(1.0, level=3), backend.b_encrypt(1.0, level=4))

    def test_mod_switch_down_only(self, small_params):
        backend = ExactSimBackend(small_params)
        h = backend.b_encrypt(1.0, level=3)
        assert backend.b_mod_switch(h, 1).level == 1
        with pytest.raises(AlignmentError):
            backend.b_mod_switch(h, 4)

    def test_depth_exhausted_at_bottom(self, small_params):
        backend = ExactSimBackend(small_params)
        h = backend.b_encrypt(1.0, level=0)
        with pytest.raises(DepthExhaustedError) as info:
            backend.b_mul(h, h)
        assert info.value.op == "mul"
        assert info.value.op_index == 2

    def test_handles_are_engine_bound(self, small_params):
        exact = ExactSimBackend(small_params)
        he = HEBackend(small_params, seed=1)
        with pytest.raises(AlignmentError):
            exact.b_add(he.b_encrypt(1.0), he.b_encrypt(1.0))

    def test_reset_trace(self, small_params):
        backend = ExactSimBackend(small_params)
        backend.b_encrypt(1.0)
        backend.reset_trace()
        assert len(backend.trace) == 0
        assert backend.op_count == 0


class TestDepthTrace:
    """Trace bookkeeping"""

    def test_max_depth_of_empty_trace(self):
        assert max_depth_of(DepthTrace(11)) == 0

    def test_max_depth_uses_lowest_level(self):
        trace = DepthTrace(11)
        trace.record("encrypt", 11, 11, Fraction(1))
        trace.record("rescale", 11, 10, Fraction(1))
        trace.record("rescale", 10, 7, Fraction(1))
        assert max_depth_of(trace) == 4
        assert trace.op_counts() == {"encrypt": 1, "rescale": 2}

    def test_levels_never_rise(self):
        with pytest.raises(AlignmentError):
            DepthTrace(11).record("bad", 3, 4, Fraction(1))

    def test_csv_export(self):
        trace = DepthTrace(2)
        trace.record("encrypt", 2, 2, Fraction(2 ** 30))
        lines = trace.to_csv().splitlines()
        assert lines[0] == "op,level_before,level_after,scale"
        assert lines[1] == "encrypt,2,2,1073741824"


class TestHEBackend:
    """Ciphertext engine against the exact simulation"""

    def test_trace_matches_exact_engine(self, small_params, short_prices):
        quotes = short_prices.normalized(100.0)
        exact = ExactSimBackend(small_params)
        he = HEBackend(small_params, seed=11)
        exact_result, exact_decisions = run_stages(exact, quotes)
        he_result, he_decisions = run_stages(he, quotes)
        assert he.trace.symbols() == exact.trace.symbols()
        plain_m = decrypt_series(exact, exact_result.m)
        for got, want in zip(decrypt_series(he, he_result.m), plain_m):
            assert got == pytest.approx(want, abs=1e-6)
        plain_d = decrypt_series(exact, exact_decisions)
        for got, want in zip(decrypt_series(he, he_decisions), plain_d):
            assert got == pytest.approx(want, abs=1e-6)

    def test_same_fault_at_same_op(self, short_prices):
        shallow = SchemeParams.generate(**TOY_LAYOUT, depth_budget=3)
        quotes = short_prices.normalized(100.0)
        faults = []
        for backend in (ExactSimBackend(shallow), HEBackend(shallow, seed=2)):
            with pytest.raises(DepthExhaustedError) as info:
                run_stages(backend, quotes)
            faults.append((info.value.op, info.value.level, info.value.op_index))
        assert faults[0] == faults[1]

    def test_public_only_backend_cannot_decrypt(self, small_params):
        owner = HEBackend(small_params, seed=4)
        blind = HEBackend(small_params, keys=owner.keys)
        assert owner.can_decrypt
        assert not blind.can_decrypt
        h = blind.b_encrypt(1.0)
        with pytest.raises(ConfidentialityError):
            blind.b_decrypt(h)
        assert owner.b_decrypt(owner.import_handle(blind.export_handle(h))) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_export_import(self, small_params):
        he = HEBackend(small_params, seed=6)
        h = he.b_encrypt(-0.25, level=4)
        restored = he.import_handle(he.export_handle(h))
        assert restored.level == 4
        assert restored.scale == h.scale
        assert he.b_decrypt(restored) == pytest.approx(-0.25, abs=1e-6)
