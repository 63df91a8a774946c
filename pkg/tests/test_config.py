"""Tests for layered configuration"""

from pathlib import Path

import pytest

from ciphertrend.config import load_config, parse_windows, read_environment, read_params_file
from ciphertrend.errors import ConfigError
from ciphertrend.models import Engine, Role, VoteRule
from tests.helpers import TOY_LAYOUT

TOY_FILE = "\n".join([
    "RING_DEGREE=64",
    "FIRST_MODULUS_BITS=50",
    "MIDDLE_MODULUS_BITS=30",
    "MIDDLE_MODULI=10",
    "LAST_MODULUS_BITS=50",
    "SPECIAL_MODULUS_BITS=55",
    "SCALE_BITS=30",
])


@pytest.fixture
def params_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(TOY_FILE + "\nENGINE=exact\nWINDOWS=5,10,4\nSEED=11\n# comment\n")
    return path


class TestPrecedence:
    """flags > file > environment > defaults"""

    def test_defaults(self):
        config = load_config({}, environ={})
        assert config.engine is Engine.HE
        assert config.role is Role.LOCAL
        assert config.strategy.windows == (12, 26, 9)
        assert config.strategy.threshold is None
        assert config.scheme.ring_degree == 8192
        assert config.scheme.depth_budget == 11

    def test_file_sets_scheme_and_strategy(self, params_file):
        config = load_config({}, params_file=params_file, environ={})
        assert config.engine is Engine.EXACT
        assert config.strategy.windows == (5, 10, 4)
        assert config.seed == 11
        assert config.scheme.ring_degree == TOY_LAYOUT["ring_degree"]
        assert config.scheme.scale_bits == 30

    def test_file_beats_environment(self, params_file):
        env = {"CIPHERTREND_ENGINE": "oracle", "CIPHERTREND_NORM": "50"}
        config = load_config({}, params_file=params_file, environ=env)
        assert config.engine is Engine.EXACT
        assert config.strategy.normalization == 50.0

    def test_flags_beat_file(self, params_file):
        config = load_config(
            {"ENGINE": "oracle", "WINDOWS": "3,6,2", "SEED": None},
            params_file=params_file,
            environ={},
        )
        assert config.engine is Engine.ORACLE
        assert config.strategy.windows == (3, 6, 2)
        assert config.seed == 11

    def test_environment_filtering(self):
        env = {"CIPHERTREND_TAU": "0.5", "CIPHERTREND_LOG_LEVEL": "DEBUG", "HOME": "/root"}
        assert read_environment(env) == {"TAU": "0.5"}


class TestValues:
    """Conversions and validation"""

    def test_tau_auto(self):
        assert load_config({"TAU": "auto"}, environ={}).strategy.threshold is None
        assert load_config({"TAU": "0.25"}, environ={}).strategy.threshold == 0.25

    def test_network_settings(self):
        config = load_config(
            {"ROLE": "aggregator", "ADDR": "0.0.0.0:9000", "TRADERS": "3", "VOTE_RULE": "sum"},
            environ={},
        )
        assert config.role is Role.AGGREGATOR
        assert (config.host, config.port) == ("0.0.0.0", 9000)
        assert config.traders == 3
        assert config.strategy.vote_rule is VoteRule.SUM

    def test_paths(self):
        config = load_config({"INPUT": "prices.csv", "OUT": "results"}, environ={})
        assert config.input == Path("prices.csv")
        assert config.out == Path("results")

    def test_parse_windows(self):
        assert parse_windows("12, 26, 9") == (12, 26, 9)
        assert parse_windows([1, 2, 3]) == (1, 2, 3)
        with pytest.raises(ConfigError):
            parse_windows("12,26")

    def test_engine_list(self):
        config = load_config({"ENGINE": "he, exact-sim,he"}, environ={})
        assert config.engines == (Engine.HE, Engine.EXACT)
        assert config.engine is Engine.HE

    def test_engine_alias(self):
        assert Engine("exact") is Engine.EXACT
        assert load_config({"ENGINE": "exact"}, environ={}).engines == (Engine.EXACT,)

    @pytest.mark.parametrize("flags", [
        {"WINDOWS": "26,12,9"},
        {"ENGINE": "quantum"},
        {"ENGINE": "he,quantum"},
        {"ENGINE": ","},
        {"NORM": "-1"},
        {"ADDR": "localhost"},
        {"SEED": "seven"},
        {"TAU": "-0.1"},
    ])
    def test_invalid_values(self, flags):
        with pytest.raises(ConfigError):
            load_config(flags, environ={})

    def test_unknown_flag(self):
        with pytest.raises(ConfigError):
            load_config({"COLOR": "blue"}, environ={})

    def test_invalid_scheme(self):
        with pytest.raises(ConfigError):
            load_config({"RING_DEGREE": "100"}, environ={})


class TestParamsFile:
    """KEY=VALUE files"""

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text("ENGINE=he\nCOLOUR=red\n")
        with pytest.raises(ConfigError) as info:
            read_params_file(path)
        assert "COLOUR" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_params_file(tmp_path / "nope.env")

    def test_log_keys_pass_through(self, tmp_path):
        path = tmp_path / "log.env"
        path.write_text("LOG_LEVEL=DEBUG\nENGINE=exact\n")
        assert load_config({}, params_file=path, environ={}).engine is Engine.EXACT
