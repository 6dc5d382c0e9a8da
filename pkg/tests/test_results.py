"""Tests for results.py – CSV and JSON result files."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from decoherent_qwalk import __version__
from decoherent_qwalk.config import parse_config
from decoherent_qwalk.const import DOMAIN, RECORD_DISTRIBUTION, RECORD_FIT, RECORD_VARIANCE
from decoherent_qwalk.ensemble import ensemble_run
from decoherent_qwalk.models import ResultFile
from decoherent_qwalk.results import (
    distribution_section,
    file_metadata,
    fit_section,
    overlay_section,
    read_result,
    series_from_section,
    variance_section,
    write_result,
)
from tests.synthetic import SeriesBuilder


@pytest.fixture
def config():
    return parse_config({"model": "links", "p": 0.2, "steps": 20, "trajectories": 8, "snapshots": [10]})


@pytest.fixture
def result(config):
    return ensemble_run(config.ensemble_spec())


def _file(config, *sections) -> ResultFile:
    return ResultFile(metadata=file_metadata(config), sections=tuple(sections))


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


class TestSections:
    def test_file_metadata(self, config):
        meta = file_metadata(config, note=np.float64(1.5))
        assert meta["tool"] == DOMAIN
        assert meta["version"] == __version__
        assert meta["config"]["p"] == 0.2
        assert "threads" not in meta["config"]
        assert meta["note"] == 1.5
        assert type(meta["note"]) is float

    def test_variance_section(self, result):
        section = variance_section(result)
        assert section.kind == RECORD_VARIANCE
        assert section.columns == ("t", "sigma2", "stderr", "mean_trajectory_sigma2")
        assert len(section.rows) == 21
        assert section.metadata["ensemble_size"] == 8
        assert section.metadata["model"] == "broken_links"

    def test_variance_section_with_config(self, result, config):
        section = variance_section(result, "run", config)
        assert section.label == "run"
        assert section.metadata["config"]["model"] == "broken_links"

    def test_distribution_section(self, result):
        section = distribution_section(result.snapshots[10], 10, "t10")
        assert section.kind == RECORD_DISTRIBUTION
        assert section.metadata == {"t": 10}
        assert section.rows[0][0] == -10
        assert sum(p for _, p in section.rows) == pytest.approx(1.0)

    def test_fit_section(self):
        section = fit_section([("D", 1.0, 0.9, 1.1), ("tail_start", np.float64(40.0), None, None)], window=(40, 100))
        assert section.kind == RECORD_FIT
        assert section.rows[1] == ("tail_start", 40.0, None, None)
        assert section.metadata == {"window": [40, 100]}

    def test_overlay_section(self):
        series = SeriesBuilder(4).quadratic(1.0).build()
        section = overlay_section(series, [0.0, 2.0, 4.0, 9.0, 16.0], "p0.1_brownian", gamma=0.1)
        assert section.rows[0] == (0, 0.0, 0.0, 0.0)
        assert section.rows[1][3] == pytest.approx(-0.5)
        assert section.metadata == {"gamma": 0.1}

    def test_series_round_trip(self, result):
        series = series_from_section(variance_section(result))
        np.testing.assert_array_equal(series.sigma2, result.series.sigma2)
        np.testing.assert_array_equal(series.standard_errors, result.series.standard_errors)
        assert series.ensemble_size == 8

    def test_series_needs_variance_section(self):
        with pytest.raises(ValueError, match="expected a 'variance' section"):
            series_from_section(fit_section([("D", 1.0, None, None)]))


# ---------------------------------------------------------------------------
# Writing and reading
# ---------------------------------------------------------------------------


class TestCsv:
    def test_single_section(self, tmp_path, config, result):
        path = tmp_path / "runs" / "links.csv"
        written = write_result(_file(config, variance_section(result)), path)
        assert written == [path]
        text = path.read_text()
        assert text.startswith("# tool: ")
        assert "t,sigma2,stderr,mean_trajectory_sigma2\n" in text

    def test_exact_read_back(self, tmp_path, config, result):
        original = _file(
            config,
            variance_section(result),
            distribution_section(result.snapshots[10], 10, "t10"),
            fit_section([("D", 1.25, 1.0, 1.5), ("coherence_time", 3.5355, None, None)], "fit"),
        )
        written = write_result(original, tmp_path / "links.csv")
        assert [p.name for p in written] == ["links.csv", "links_t10.csv", "links_fit.csv"]
        for path, section in zip(written, original.sections, strict=True):
            back = read_result(path)
            assert back.metadata == original.metadata
            assert back.sections == (section,)

    def test_duplicate_targets(self, tmp_path, config, result):
        twice = _file(config, variance_section(result, "a"), variance_section(result, "a"))
        with pytest.raises(ValueError, match="two sections"):
            write_result(twice, tmp_path / "x.csv")

    def test_logs_each_file(self, tmp_path, config, result, caplog):
        with caplog.at_level(logging.INFO, logger=DOMAIN):
            write_result(_file(config, variance_section(result)), tmp_path / "x.csv")
        assert "Wrote" in caplog.text


class TestJson:
    def test_one_file_holds_every_section(self, tmp_path, config, result):
        original = _file(
            config,
            variance_section(result, "p0.2"),
            distribution_section(result.snapshots[10], 10, "p0.2_t10"),
            fit_section([("D", 1.25, None, None)], "fit"),
        )
        written = write_result(original, tmp_path / "bundle.json", "json")
        assert written == [tmp_path / "bundle.json"]
        assert read_result(written[0]) == original

    def test_section_lookup(self, tmp_path, config, result):
        original = _file(config, variance_section(result, "a"), variance_section(result, "b"))
        back = read_result(write_result(original, tmp_path / "r.json", "json")[0])
        assert back.section(RECORD_VARIANCE, "b").label == "b"
        assert back.section(RECORD_VARIANCE).label == "a"
        with pytest.raises(KeyError, match="labelled 'c'"):
            back.section(RECORD_VARIANCE, "c")


class TestErrors:
    def test_unknown_format(self, tmp_path, config):
        with pytest.raises(ValueError, match="unknown output format"):
            write_result(_file(config), tmp_path / "x.parquet", "parquet")

    @pytest.mark.parametrize(
        ("name", "content"),
        [
            ("empty.csv", ""),
            ("bad_meta.csv", "# no colon here\nt,sigma2\n"),
            ("bad_json_meta.csv", "# tool: {oops\nt,sigma2\n"),
            ("broken.json", "{"),
            ("wrong.json", '{"metadata": {}}'),
        ],
    )
    def test_not_a_result_file(self, tmp_path, name, content):
        path = tmp_path / name
        path.write_text(content)
        with pytest.raises(ValueError, match="not a result file"):
            read_result(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_result(tmp_path / "absent.csv")
