"""Experiment configuration: defaults, JSON config file and command-line flags.

Precedence, lowest to highest: built-in defaults, the JSON file given with
``--config``, then flags.  ``emit_config`` produces the plain-JSON form that
is embedded in result files; ``parse_config`` accepts it back unchanged.
"""

from __future__ import annotations

import json
import logging
import pathlib
from collections.abc import Mapping
from dataclasses import fields
from typing import Any

import voluptuous as vol

from .const import (
    CONF_INTERVAL_UNIFORM,
    CONF_INTERVALS,
    CONF_MODEL,
    CONF_OUTPUT_FORMAT,
    CONF_OUTPUT_PATH,
    CONF_P,
    CONF_PERIOD,
    CONF_PRESET,
    CONF_QUBIT,
    CONF_SEED,
    CONF_SNAPSHOTS,
    CONF_STEPS,
    CONF_THETA,
    CONF_THREADS,
    CONF_TRAJECTORIES,
    DEFAULT_STEPS,
    DEFAULT_TRAJECTORIES,
    MODEL_ALIASES,
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_COHERENT,
    MODEL_MEASURED,
    MODELS,
    OUTPUT_FORMATS,
    PRESET_NAMES,
)
from .ensemble import resolve_threads
from .exceptions import ConfigError
from .models import ExperimentConfig
from .walk import check_qubit

_LOGGER = logging.getLogger(__name__)

_SCHEDULE_KEYS = (CONF_PERIOD, CONF_INTERVAL_UNIFORM, CONF_INTERVALS)
# Keys that are not part of the experiment itself and stay out of result files.
_RUNTIME_KEYS = (CONF_THREADS, CONF_OUTPUT_PATH)


def _whole(value: Any) -> int:
    """Integer validator that refuses booleans and non-integral numbers."""
    if isinstance(value, bool):
        raise vol.Invalid(f"expected an integer (got {value!r})")
    if isinstance(value, float):
        if not value.is_integer():
            raise vol.Invalid(f"expected an integer (got {value!r})")
        return int(value)
    try:
        return int(value)
    except (TypeError, ValueError) as err:
        raise vol.Invalid(f"expected an integer (got {value!r})") from err


def _model(value: Any) -> str:
    name = str(value)
    if name in MODELS:
        return name
    if name in MODEL_ALIASES:
        return MODEL_ALIASES[name]
    raise vol.Invalid(f"unknown model {name!r}; expected one of {sorted(set(MODELS) | set(MODEL_ALIASES))}")


def _qubit(value: Any) -> tuple[complex, complex]:
    """Accept [[re, im], [re, im]] (the emitted form) or a pair of numbers."""
    try:
        a, b = value
        pair = tuple(complex(*z) if isinstance(z, list | tuple) else complex(z) for z in (a, b))
        return check_qubit(pair)  # type: ignore[arg-type]
    except (TypeError, ValueError) as err:
        raise vol.Invalid(f"qubit must be [[re, im], [re, im]] with unit norm ({err})") from err


_POSITIVE_INT = vol.All(_whole, vol.Range(min=1))
_NON_NEGATIVE_INT = vol.All(_whole, vol.Range(min=0))

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_MODEL): _model,
        vol.Optional(CONF_PRESET): vol.In(PRESET_NAMES),
        vol.Optional(CONF_STEPS): _POSITIVE_INT,
        vol.Optional(CONF_TRAJECTORIES): _POSITIVE_INT,
        vol.Optional(CONF_SEED): _NON_NEGATIVE_INT,
        vol.Optional(CONF_THETA): vol.Coerce(float),
        vol.Optional(CONF_QUBIT): _qubit,
        vol.Optional(CONF_PERIOD): _POSITIVE_INT,
        vol.Optional(CONF_INTERVAL_UNIFORM): vol.All(vol.ExactSequence([_POSITIVE_INT, _POSITIVE_INT]), tuple),
        vol.Optional(CONF_INTERVALS): vol.All([_POSITIVE_INT], vol.Length(min=1), tuple),
        vol.Optional(CONF_P): vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0)),
        vol.Optional(CONF_OUTPUT_PATH): vol.Any(None, str),
        vol.Optional(CONF_OUTPUT_FORMAT): vol.In(OUTPUT_FORMATS),
        vol.Optional(CONF_THREADS): _POSITIVE_INT,
        vol.Optional(CONF_SNAPSHOTS): vol.All([_NON_NEGATIVE_INT], lambda v: tuple(sorted(set(v)))),
    },
    extra=vol.PREVENT_EXTRA,
)


def _read_config_file(path: str | pathlib.Path) -> dict[str, Any]:
    """Load a JSON config file; OSError propagates with the path in its message."""
    text = pathlib.Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object (got {type(data).__name__})")
    return data


def _conflict(first: str, second: str) -> ConfigError:
    return ConfigError(f"conflicting configuration: {first!r} and {second!r} cannot be combined")


def _check_consistency(data: dict[str, Any]) -> None:
    """Reject combinations of keys that describe different models."""
    if CONF_MODEL in data and CONF_PRESET in data:
        raise _conflict(CONF_MODEL, CONF_PRESET)
    if CONF_MODEL not in data and CONF_PRESET not in data:
        raise ConfigError(f"configuration needs either {CONF_MODEL!r} or {CONF_PRESET!r}")

    schedule = [key for key in _SCHEDULE_KEYS if key in data]
    if len(schedule) > 1:
        raise _conflict(schedule[0], schedule[1])
    if schedule and CONF_P in data:
        raise _conflict(schedule[0], CONF_P)

    if CONF_PRESET in data:
        for key in (*_SCHEDULE_KEYS, CONF_P):
            if key in data:
                raise _conflict(CONF_PRESET, key)
        return

    model = data[CONF_MODEL]
    if model == MODEL_COHERENT:
        for key in (*schedule, CONF_P):
            if key in data:
                raise _conflict(f"{CONF_MODEL}={model}", key)
    elif model == MODEL_MEASURED:
        if CONF_P in data:
            raise _conflict(f"{CONF_MODEL}={model}", CONF_P)
        if not schedule:
            raise ConfigError(f"model {model!r} needs one of {list(_SCHEDULE_KEYS)}")
    elif model in (MODEL_BROKEN_LINKS, MODEL_CLASSICAL):
        if schedule:
            raise _conflict(f"{CONF_MODEL}={model}", schedule[0])
        if model == MODEL_BROKEN_LINKS and CONF_P not in data:
            raise ConfigError(f"model {model!r} needs {CONF_P!r}")

    if CONF_INTERVAL_UNIFORM in data:
        low, high = data[CONF_INTERVAL_UNIFORM]
        if low > high:
            raise ConfigError(f"{CONF_INTERVAL_UNIFORM} needs A <= B (got {low}, {high})")
    steps = data.get(CONF_STEPS, DEFAULT_STEPS)
    late = [t for t in data.get(CONF_SNAPSHOTS, ()) if t > steps]
    if late:
        raise ConfigError(f"{CONF_SNAPSHOTS} {late} lie beyond {CONF_STEPS}={steps}")


def parse_config(
    flags: Mapping[str, Any] | None = None,
    config_file: str | pathlib.Path | None = None,
) -> ExperimentConfig:
    """Merge defaults, *config_file* and *flags* into a validated ExperimentConfig.

    Flags whose value is None count as not given.  Unknown keys and
    contradictory model parameters raise ConfigError naming the keys.
    """
    merged: dict[str, Any] = {}
    if config_file is not None:
        merged.update(_read_config_file(config_file))
        _LOGGER.debug("Config file %s: %s", config_file, merged)
    if flags:
        merged.update({key: value for key, value in flags.items() if value is not None})

    try:
        data = CONFIG_SCHEMA(merged)
    except vol.Invalid as err:
        raise ConfigError(f"invalid configuration: {err}") from err
    _check_consistency(data)

    if data.get(CONF_MODEL) is not None:
        data.setdefault(CONF_STEPS, DEFAULT_STEPS)
        data.setdefault(CONF_TRAJECTORIES, DEFAULT_TRAJECTORIES)
        if data[CONF_MODEL] == MODEL_CLASSICAL:
            data.setdefault(CONF_P, 0.0)
    if CONF_THREADS not in data:
        try:
            data[CONF_THREADS] = resolve_threads(None)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    config = ExperimentConfig(**data)
    _LOGGER.debug("Parsed configuration: %s", emit_config(config))
    return config


def emit_config(config: ExperimentConfig, include_runtime: bool = True) -> dict[str, Any]:
    """Plain-JSON form of *config*; None values are left out.

    With ``include_runtime=False`` the worker count and output path are
    dropped, which is the form embedded in result files.
    """
    out: dict[str, Any] = {}
    for item in fields(config):
        value = getattr(config, item.name)
        if value is None or (not include_runtime and item.name in _RUNTIME_KEYS):
            continue
        if item.name == CONF_QUBIT:
            value = [[z.real, z.imag] for z in map(complex, value)]
        elif isinstance(value, tuple):
            value = list(value)
        out[item.name] = value
    return out
