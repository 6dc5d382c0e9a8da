"""Named experiment presets, one per standard plot plus two studies.

A preset is a list of runs sharing a step count.  ``expand_preset`` turns a
preset configuration into fully explicit model configurations; steps,
trajectories, seed, coin and snapshots given on the command line override
the preset's own values.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Any

from .const import (
    CONF_INTERVAL_UNIFORM,
    CONF_P,
    CONF_PERIOD,
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_COHERENT,
    MODEL_MEASURED,
    PRESET_DIFFUSION_LAW,
    PRESET_FIG2,
    PRESET_FIG4,
    PRESET_FIG5,
    PRESET_FIG6,
    PRESET_FIG7,
    PRESET_INTERVALS,
    PRESET_LINKS_TRAJECTORIES,
    PRESET_MEASURED_TRAJECTORIES,
)
from .exceptions import ConfigError
from .models import ExperimentConfig

_LOGGER = logging.getLogger(__name__)

# Models without randomness need a single trajectory.
_DETERMINISTIC = (MODEL_COHERENT, MODEL_CLASSICAL)


@dataclass(frozen=True)
class PresetRun:
    """One series of a preset: a label and its explicit model configuration."""

    label: str
    config: ExperimentConfig


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    steps: int
    runs: tuple[tuple[str, str, dict[str, Any]], ...]  # (label, model, model parameters)
    snapshots: tuple[int, ...] = ()
    brownian_overlay: bool = False
    diffusion_law: bool = False


def _link_runs(ps: tuple[float, ...]) -> tuple[tuple[str, str, dict[str, Any]], ...]:
    return tuple((f"p{p:g}", MODEL_BROKEN_LINKS, {CONF_P: p}) for p in ps)


_COHERENT_RUN: tuple[str, str, dict[str, Any]] = ("coherent", MODEL_COHERENT, {})

PRESETS: dict[str, ExperimentPreset] = {
    PRESET_FIG2: ExperimentPreset(
        name=PRESET_FIG2,
        description="Variance staircase for periodic measurements every 10 and 20 steps",
        steps=200,
        runs=(
            ("T10", MODEL_MEASURED, {CONF_PERIOD: 10}),
            ("T20", MODEL_MEASURED, {CONF_PERIOD: 20}),
            _COHERENT_RUN,
        ),
    ),
    PRESET_FIG4: ExperimentPreset(
        name=PRESET_FIG4,
        description="Averaged distributions for p=0.01 at t=50 and t=1000",
        steps=1000,
        runs=(*_link_runs((0.01,)), _COHERENT_RUN),
        snapshots=(50, 1000),
    ),
    PRESET_FIG5: ExperimentPreset(
        name=PRESET_FIG5,
        description="Variance for p=0.01, linear and log-log",
        steps=1000,
        runs=(*_link_runs((0.01,)), _COHERENT_RUN),
    ),
    PRESET_FIG6: ExperimentPreset(
        name=PRESET_FIG6,
        description="Variance for several p with the coherent and classical references",
        steps=2000,
        runs=(
            *_link_runs((0.01, 0.03, 0.10, 0.20, 0.40)),
            _COHERENT_RUN,
            ("classical", MODEL_CLASSICAL, {CONF_P: 0.0}),
        ),
    ),
    PRESET_FIG7: ExperimentPreset(
        name=PRESET_FIG7,
        description="Ensemble variance against the equivalent Brownian particle",
        steps=2000,
        runs=_link_runs((0.01, 0.10, 0.30, 0.40)),
        brownian_overlay=True,
    ),
    PRESET_INTERVALS: ExperimentPreset(
        name=PRESET_INTERVALS,
        description="Random intervals uniform in [1, 10] against periodic measurements with T=7",
        steps=700,
        runs=(
            ("uniform1-10", MODEL_MEASURED, {CONF_INTERVAL_UNIFORM: (1, 10)}),
            ("T7", MODEL_MEASURED, {CONF_PERIOD: 7}),
        ),
    ),
    PRESET_DIFFUSION_LAW: ExperimentPreset(
        name=PRESET_DIFFUSION_LAW,
        description="Broken-link diffusion coefficient against (1-p)/p, including p=4/9",
        steps=2000,
        runs=_link_runs((0.1, 0.2, 0.3, 0.4, 4 / 9)),
        diffusion_law=True,
    ),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None


def _default_trajectories(model: str) -> int:
    return PRESET_MEASURED_TRAJECTORIES if model == MODEL_MEASURED else PRESET_LINKS_TRAJECTORIES


def expand_preset(config: ExperimentConfig) -> list[PresetRun]:
    """Explicit per-run configurations of the preset named in *config*."""
    if config.preset is None:
        raise ConfigError("configuration names no preset")
    preset = get_preset(config.preset)
    steps = preset.steps if config.steps is None else config.steps
    snapshots = config.snapshots or tuple(t for t in preset.snapshots if t <= steps)
    late = [t for t in snapshots if t > steps]
    if late:
        raise ConfigError(f"snapshots {late} lie beyond steps={steps} of preset {preset.name!r}")

    runs = []
    for label, model, params in preset.runs:
        if model in _DETERMINISTIC:
            trajectories = 1
        else:
            trajectories = _default_trajectories(model) if config.trajectories is None else config.trajectories
        explicit = dataclasses.replace(
            config,
            preset=None,
            model=model,
            steps=steps,
            trajectories=trajectories,
            snapshots=snapshots,
            **params,
        )
        runs.append(PresetRun(label, explicit))
    _LOGGER.debug("Preset %s: %d runs of %d steps", preset.name, len(runs), steps)
    return runs
