"""Layered configuration: flags, KEY=VALUE file, CIPHERTREND_ environment, defaults"""

import os
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from .errors import ConfigError
from .models import Engine, RunConfig, SchemeParams, StrategyConfig

logger = structlog.get_logger()

ENV_PREFIX = "CIPHERTREND_"


def parse_windows(value: Union[str, tuple, list]) -> tuple:
    if isinstance(value, (tuple, list)):
        return tuple(int(v) for v in value)
    parts = [p for p in value.replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ConfigError(f"WINDOWS needs three comma-separated integers, got {value!r}")
    return tuple(int(p) for p in parts)


def parse_engines(value: Union[str, tuple, list]) -> tuple:
    """One engine or a comma-separated list; the first one is primary"""
    if isinstance(value, (tuple, list)):
        return tuple(Engine(v) for v in value)
    parts = [p for p in value.replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigError("ENGINE is empty")
    return tuple(Engine(p) for p in parts)


def _optional_float(value: Any) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "auto", "none")):
        return None
    return float(value)


# key -> (section, field, converter)
KEYS: Dict[str, tuple] = {
    "INPUT": ("run", "input", Path),
    "ENGINE": ("run", "engines", parse_engines),
    "ROLE": ("run", "role", str),
    "ADDR": ("run", "addr", str),
    "OUT": ("run", "out", Path),
    "SEED": ("run", "seed", int),
    "NOISE": ("run", "noise_stddev", float),
    "TRADERS": ("run", "traders", int),
    "TRADER_ID": ("run", "trader_id", str),
    "CONNECT_ATTEMPTS": ("run", "connect_attempts", int),
    "STARTUP_TIMEOUT": ("run", "startup_timeout", float),
    "WINDOWS": ("strategy", "windows", parse_windows),
    "NORM": ("strategy", "normalization", float),
    "TAU": ("strategy", "threshold", _optional_float),
    "MIN_HISTORY": ("strategy", "min_history", int),
    "VOTE_RULE": ("strategy", "vote_rule", str),
    "TICK_TIMEOUT": ("strategy", "tick_timeout", float),
    "RING_DEGREE": ("scheme", "ring_degree", int),
    "FIRST_MODULUS_BITS": ("scheme", "first_bits", int),
    "MIDDLE_MODULUS_BITS": ("scheme", "middle_bits", int),
    "MIDDLE_MODULI": ("scheme", "middle_count", int),
    "LAST_MODULUS_BITS": ("scheme", "last_bits", int),
    "SPECIAL_MODULUS_BITS": ("scheme", "special_bits", int),
    "SCALE_BITS": ("scheme", "scale_bits", int),
    "SIGMA": ("scheme", "sigma", float),
    "DEPTH_BUDGET": ("scheme", "depth_budget", int),
}

# read by the CLI before configuration is resolved
PASSTHROUGH_KEYS = {"LOG_LEVEL", "LOG_JSON"}


def read_params_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a flat KEY=VALUE file; unknown keys are rejected"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = {k.upper(): v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(KEYS) - PASSTHROUGH_KEYS)
    if unknown:
        raise ConfigError(f"Unknown keys in {path}: {', '.join(unknown)}")
    return values


def read_environment(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    return {
        key[len(ENV_PREFIX):]: value
        for key, value in environ.items()
        if key.startswith(ENV_PREFIX) and key[len(ENV_PREFIX):] in KEYS
    }


def _convert(key: str, value: Any) -> Any:
    converter: Callable = KEYS[key][2]
    if not isinstance(value, str) or converter is str:
        return value if converter is not Path else Path(value)
    try:
        return converter(value.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc


def _validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(p) for p in first["loc"]) or "config"
    return f"{where}: {first['msg']}"


def build_scheme(overrides: Dict[str, Any]) -> SchemeParams:
    if not overrides:
        return SchemeParams.default()
    try:
        return SchemeParams.generate(**overrides)
    except ValidationError as exc:
        raise ConfigError(f"scheme.{_validation_message(exc)}") from exc
    except ValueError as exc:
        raise ConfigError(f"scheme: {exc}") from exc


def load_config(
    flags: Optional[Mapping[str, Any]] = None,
    params_file: Optional[Union[str, Path]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Resolve a RunConfig; flags beat the file, the file beats the environment

    `flags` uses the same upper-case keys as the file; None values are
    treated as unset.
    """
    layers = [read_environment(environ)]
    if params_file is not None:
        layers.append(read_params_file(params_file))
    layers.append({k: v for k, v in (flags or {}).items() if v is not None})

    merged: Dict[str, Any] = {}
    for layer in layers:
        for key, value in layer.items():
            if key in PASSTHROUGH_KEYS:
                continue
            if key not in KEYS:
                raise ConfigError(f"Unknown setting: {key}")
            merged[key] = value

    sections: Dict[str, Dict[str, Any]] = {"run": {}, "strategy": {}, "scheme": {}}
    for key, value in merged.items():
        section, name, _ = KEYS[key]
        sections[section][name] = _convert(key, value)

    scheme = build_scheme(sections["scheme"])
    try:
        strategy = StrategyConfig(**sections["strategy"])
        config = RunConfig(scheme=scheme, strategy=strategy, **sections["run"])
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from exc
    logger.debug(
        "Configuration resolved",
        engines=",".join(e.value for e in config.engines),
        role=config.role.value,
        ring_degree=scheme.ring_degree,
    )
    return config
