"""Tests for WMA and MACD series"""

import pytest

from ciphertrend.core.arithmetic import PlainArithmetic
from ciphertrend.errors import ParameterError
from ciphertrend.indicators import (
    DEFAULT_WINDOWS,
    MacdStream,
    macd,
    macd_plain,
    wma,
    wma_plain,
    wma_weights,
)


class TestWma:
    """Weighted moving average"""

    def test_weights_increase_and_sum_to_one(self):
        weights = wma_weights(12)
        assert sum(weights) == pytest.approx(1.0)
        assert weights == sorted(weights)
        assert weights[-1] == pytest.approx(2 * 12 / (12 * 13))

    def test_small_example(self):
        out = wma([1.0, 2.0, 3.0, 4.0], 2)
        assert out.values == pytest.approx([5 / 3, 8 / 3])
        assert out.offset == 2

    def test_constant_series(self):
        assert wma_plain([7.5] * 30, 12) == pytest.approx([7.5] * 18)

    def test_linear_series_lags(self):
        n = 9
        out = wma_plain([float(i) for i in range(40)], n)
        for i, value in enumerate(out):
            assert value == pytest.approx(i + 2 * (n - 1) / 3)

    def test_linear_in_its_input(self, rng):
        for n in (2, 12, 26):
            x, y = rng.normal(100, 5, size=60), rng.normal(0, 1, size=60)
            a, b = rng.uniform(-3, 3, size=2)
            combined = wma_plain(list(a * x + b * y), n)
            pairs = zip(wma_plain(list(x), n), wma_plain(list(y), n))
            separate = [a * u + b * v for u, v in pairs]
            assert combined == pytest.approx(separate, rel=1e-9, abs=1e-9)

    def test_shift_covariant(self, rng):
        x = list(rng.normal(100, 5, size=60))
        base = wma_plain(x, 12)
        assert wma_plain([v + 4.25 for v in x], 12) == pytest.approx([v + 4.25 for v in base])
        # dropping leading days drops the same number of averages
        assert wma_plain(x[7:], 12) == pytest.approx(base[7:])

    @pytest.mark.parametrize("n", [0, -3])
    def test_invalid_window(self, n):
        with pytest.raises(ParameterError):
            wma_weights(n)

    def test_too_short(self):
        with pytest.raises(ParameterError):
            wma([1.0] * 12, 12)


class TestMacd:
    """MACD line and intermediate series"""

    def test_lengths_and_offsets(self, sample_prices):
        result = macd(sample_prices.normalized(100.0))
        assert len(result.alpha) == 188
        assert len(result.beta) == 174
        assert len(result.theta) == 174
        assert len(result.gamma) == 165
        assert len(result.m) == 165
        assert (result.alpha.offset, result.beta.offset) == (12, 26)
        assert (result.theta.offset, result.gamma.offset, result.m.offset) == (26, 35, 35)

    def test_linear_prices_have_flat_macd(self):
        result = macd([float(i) for i in range(80)])
        assert result.theta.values == pytest.approx([14 / 3] * len(result.theta))
        assert max(abs(v) for v in result.m.values) < 1e-9

    def test_custom_windows(self):
        result = macd([1.0 + 0.01 * i for i in range(30)], windows=(3, 6, 4))
        assert len(result.m) == 20
        assert result.m.offset == 10

    def test_needs_more_than_slow_plus_signal(self):
        with pytest.raises(ParameterError):
            macd([1.0] * 35)
        assert len(macd_plain([1.0] * 36)) == 1

    @pytest.mark.parametrize("windows", [(26, 12, 9), (12, 12, 9), (0, 26, 9)])
    def test_invalid_windows(self, windows):
        with pytest.raises(ParameterError):
            macd([1.0] * 100, windows=windows)


class TestMacdStream:
    """Incremental evaluation matches the batch series"""

    def test_stream_matches_batch(self, sample_prices):
        quotes = sample_prices.normalized(100.0)
        stream = MacdStream(ops=PlainArithmetic(), windows=DEFAULT_WINDOWS)
        produced = [stream.push(q) for q in quotes]
        batch = macd_plain(quotes)
        assert produced[:35] == [None] * 35
        assert produced[35:] == batch

    def test_trimmed_stream_matches_batch(self, sample_prices):
        quotes = sample_prices.normalized(100.0)
        stream = MacdStream(ops=PlainArithmetic())
        produced = []
        for q in quotes:
            produced.append(stream.push(q))
            stream.trim()
        assert [v for v in produced if v is not None] == macd_plain(quotes)
        assert len(stream.quotes) <= 27
        assert len(stream.m) <= 2

