"""Tests for presets.py – preset tables and their expansion into explicit runs."""

from __future__ import annotations

import pytest

from decoherent_qwalk.config import emit_config, parse_config
from decoherent_qwalk.const import (
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_COHERENT,
    MODEL_MEASURED,
    PRESET_NAMES,
)
from decoherent_qwalk.exceptions import ConfigError
from decoherent_qwalk.models import MeasurementSchedule
from decoherent_qwalk.presets import PRESETS, expand_preset, get_preset


class TestPresetTable:
    def test_every_name_has_a_preset(self):
        assert set(PRESETS) == set(PRESET_NAMES)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset 'fig9'"):
            get_preset("fig9")

    @pytest.mark.parametrize(
        ("name", "steps", "labels"),
        [
            ("fig2", 200, ["T10", "T20", "coherent"]),
            ("fig4", 1000, ["p0.01", "coherent"]),
            ("fig6", 2000, ["p0.01", "p0.03", "p0.1", "p0.2", "p0.4", "coherent", "classical"]),
            ("fig7", 2000, ["p0.01", "p0.1", "p0.3", "p0.4"]),
            ("intervals", 700, ["uniform1-10", "T7"]),
        ],
    )
    def test_runs(self, name, steps, labels):
        preset = get_preset(name)
        assert preset.steps == steps
        assert [label for label, _, _ in preset.runs] == labels

    def test_flags(self):
        assert get_preset("fig7").brownian_overlay
        assert get_preset("diffusion_law").diffusion_law
        assert get_preset("fig4").snapshots == (50, 1000)


class TestExpandPreset:
    def test_defaults(self):
        runs = expand_preset(parse_config({"preset": "fig2"}))
        by_label = {run.label: run.config for run in runs}
        assert by_label["T10"].model == MODEL_MEASURED
        assert by_label["T10"].schedule == MeasurementSchedule.periodic(10)
        assert by_label["T10"].trajectories == 10_000
        assert by_label["coherent"].model == MODEL_COHERENT
        assert by_label["coherent"].trajectories == 1
        for config in by_label.values():
            assert config.steps == 200
            assert config.preset is None

    def test_link_runs(self):
        runs = expand_preset(parse_config({"preset": "fig6"}))
        links = [run.config for run in runs if run.config.model == MODEL_BROKEN_LINKS]
        assert [c.p for c in links] == [0.01, 0.03, 0.10, 0.20, 0.40]
        assert {c.trajectories for c in links} == {2000}
        classical = next(run.config for run in runs if run.config.model == MODEL_CLASSICAL)
        assert classical.p == 0.0

    def test_overrides(self):
        config = parse_config({"preset": "fig4", "steps": 300, "trajectories": 40, "seed": 7, "threads": 2})
        runs = expand_preset(config)
        link = runs[0].config
        assert (link.steps, link.trajectories, link.seed, link.threads) == (300, 40, 7, 2)
        # the t=1000 snapshot lies beyond the shortened run
        assert link.snapshots == (50,)
        assert runs[1].config.trajectories == 1

    def test_explicit_snapshots(self):
        runs = expand_preset(parse_config({"preset": "fig5", "snapshots": [10, 20]}))
        assert all(run.config.snapshots == (10, 20) for run in runs)

    def test_snapshots_beyond_steps(self):
        # preset step counts are only known here, so the check happens on expansion
        config = parse_config({"preset": "fig5", "snapshots": [150], "steps": 100})
        with pytest.raises(ConfigError, match="beyond steps=100 of preset 'fig5'"):
            expand_preset(config)

    def test_preset_snapshots_use_preset_steps(self):
        runs = expand_preset(parse_config({"preset": "fig5", "snapshots": [500]}))
        assert runs[0].config.snapshots == (500,)
        assert runs[0].config.steps == 1000

    def test_runs_regenerate_from_emitted_config(self):
        for run in expand_preset(parse_config({"preset": "intervals", "trajectories": 5})):
            assert parse_config(emit_config(run.config)) == run.config
            run.config.ensemble_spec()

    def test_needs_a_preset(self):
        with pytest.raises(ConfigError, match="no preset"):
            expand_preset(parse_config({"model": "coherent"}))
