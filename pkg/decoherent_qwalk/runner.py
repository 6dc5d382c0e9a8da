"""Run a configured experiment: ensembles, per-model fits and result files."""

from __future__ import annotations

import logging
import pathlib
from collections.abc import Callable
from typing import Any

from .classical import brownian_params_for_links, brownian_variance, d_cl
from .const import (
    COHERENT_C,
    CROSSOVER_SLOPE_THRESHOLD,
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_COHERENT,
    MODEL_MEASURED,
)
from .ensemble import ensemble_run
from .exceptions import FitFailedError
from .links import coherence_time, d_bl
from .measurement import d_rm_random, d_rm_random_exact
from .models import EnsembleResult, ExperimentConfig, ExperimentReport, ResultFile, ResultSection
from .presets import PresetRun, expand_preset, get_preset
from .results import (
    FitRow,
    distribution_section,
    file_metadata,
    fit_section,
    overlay_section,
    variance_section,
    write_result,
)
from .statistics import (
    crossover_time,
    default_tail,
    fit_brownian,
    fit_diffusion,
    fit_quadratic_coefficient,
    gaussianity,
    regress_diffusion_law,
)
from .walk import coin_operator

_LOGGER = logging.getLogger(__name__)


def _join(prefix: str, suffix: str) -> str:
    return f"{prefix}_{suffix}" if prefix else suffix


# ---------------------------------------------------------------------------
# Per-model fits
# ---------------------------------------------------------------------------


def _quadratic_rows(result: EnsembleResult) -> list[FitRow]:
    fit = fit_quadratic_coefficient(result.series)
    return [
        ("C", fit.C, None, None),
        ("C_reference", COHERENT_C, None, None),
        ("relative_residual", fit.relative_residual, None, None),
    ]


def _diffusion_rows(result: EnsembleResult, timescale: float | None) -> list[FitRow]:
    fit = fit_diffusion(result.series, default_tail(result.series, timescale))
    return [("D", fit.D, fit.ci_low, fit.ci_high), ("tail_start", fit.window[0], None, None)]


def _model_rows(result: EnsembleResult, slope_threshold: float) -> list[FitRow]:
    """Fit summary rows for one ensemble; each failing fit is logged and left out."""
    spec = result.spec
    rows: list[FitRow] = []

    def attempt(name: str, fn: Callable[..., list[FitRow]], *args: Any) -> None:
        try:
            rows.extend(fn(*args))
        except (ValueError, FitFailedError) as err:
            _LOGGER.warning("%s fit skipped for %s: %s", name, spec.model, err)

    if spec.model == MODEL_COHERENT or (spec.model == MODEL_BROKEN_LINKS and spec.p == 0):
        attempt("quadratic", _quadratic_rows, result)
    elif spec.model == MODEL_MEASURED:
        schedule = spec.schedule
        assert schedule is not None
        attempt("diffusion", _diffusion_rows, result, schedule.mean_interval / 2)
        coin = coin_operator(spec.theta)
        rows.append(("D_reference", d_rm_random_exact(schedule, coin, spec.qubit), None, None))
        rows.append(("D_reference_asymptotic", d_rm_random(schedule), None, None))
        rows.append(("mean_interval", schedule.mean_interval, None, None))
    elif spec.model == MODEL_BROKEN_LINKS:
        p = float(spec.p)  # type: ignore[arg-type]
        t_c = coherence_time(p)
        attempt("diffusion", _diffusion_rows, result, t_c)
        if p < 1:
            rows.append(("D_reference", d_bl(p), None, None))
        if t_c is not None:
            rows.append(("coherence_time", t_c, None, None))
        estimate = crossover_time(result.series, slope_threshold)
        if estimate is None:
            _LOGGER.info("No crossover below slope %.3g for p=%.4g", slope_threshold, p)
        else:
            rows.append(("crossover_time", estimate.time, None, None))
    elif spec.model == MODEL_CLASSICAL:
        attempt("diffusion", _diffusion_rows, result, None)
        rows.append(("D_reference", d_cl(float(spec.p)), None, None))  # type: ignore[arg-type]

    for t, dist in sorted(result.snapshots.items()):
        if t == 0:
            continue
        try:
            report = gaussianity(dist)
        except ValueError as err:
            _LOGGER.debug("No gaussianity at t=%d: %s", t, err)
            continue
        rows.append((f"excess_kurtosis_t{t}", report.excess_kurtosis, None, None))
    return rows


def _brownian_overlay(result: EnsembleResult, label: str) -> tuple[ResultSection | None, list[FitRow]]:
    """Ensemble sigma^2 next to the Brownian curve with C=0.293 and gamma from p."""
    p = float(result.spec.p)  # type: ignore[arg-type]
    if not 0 < p < 1:
        return None, []
    params = brownian_params_for_links(p)
    curve = brownian_variance(params, result.series.times)
    section = overlay_section(result.series, curve, _join(label, "brownian"), C=params.C, gamma=params.gamma)
    rows: list[FitRow] = [("gamma_reference", params.gamma, None, None)]
    try:
        fit = fit_brownian(result.series, fixed_C=COHERENT_C)
        rows.append(("gamma", fit.params.gamma, None, None))
    except (ValueError, FitFailedError) as err:
        _LOGGER.warning("Brownian fit skipped for p=%.4g: %s", p, err)
    return section, rows


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _format_rows(rows: list[FitRow]) -> str:
    parts = []
    for name, value, lo, hi in rows:
        text = f"{name}={value:.6g}"
        if lo is not None and hi is not None:
            text += f" [{lo:.6g}, {hi:.6g}]"
        parts.append(text)
    return ", ".join(parts)


def run_experiment(
    config: ExperimentConfig,
    *,
    slope_threshold: float = CROSSOVER_SLOPE_THRESHOLD,
) -> ExperimentReport:
    """Run every ensemble of *config*, fit each series and write the result files.

    A preset runs its series one after another; every section carries the
    explicit configuration that regenerates it.  Nothing is written when
    ``output_path`` is None.
    """
    preset = get_preset(config.preset) if config.preset is not None else None
    runs = expand_preset(config) if preset is not None else [PresetRun("", config)]

    results: dict[str, EnsembleResult] = {}
    sections: list[ResultSection] = []
    fit_rows: list[FitRow] = []
    summary: list[str] = []
    link_fits: list[tuple[float, float]] = []

    for run in runs:
        result = ensemble_run(run.config.ensemble_spec(), threads=config.threads)
        results[run.label] = result
        explicit = run.config if preset is not None else None
        sections.append(variance_section(result, run.label, explicit))
        for t, dist in sorted(result.snapshots.items()):
            sections.append(distribution_section(dist, t, _join(run.label, f"t{t}")))

        rows = _model_rows(result, slope_threshold)
        if preset is not None and preset.brownian_overlay:
            overlay, overlay_rows = _brownian_overlay(result, run.label)
            if overlay is not None:
                sections.append(overlay)
            rows.extend(overlay_rows)
        if result.spec.model == MODEL_BROKEN_LINKS:
            link_fits.extend((float(result.spec.p), value) for name, value, _, _ in rows if name == "D")  # type: ignore[arg-type]
        fit_rows.extend((_join(run.label, name), value, lo, hi) for name, value, lo, hi in rows)

        series = result.series
        line = f"{run.label or result.spec.model}: sigma2({series.t_max})={series.sigma2[-1]:.6g}"
        if series.ensemble_size > 1:
            line += f" +- {series.standard_errors[-1]:.3g} ({series.ensemble_size} trajectories)"
        if rows:
            line += f"; {_format_rows(rows)}"
        summary.append(line)

    if preset is not None and preset.diffusion_law:
        try:
            law = regress_diffusion_law([p for p, _ in link_fits], [d for _, d in link_fits])
        except ValueError as err:
            _LOGGER.warning("Diffusion-law regression skipped: %s", err)
        else:
            lo, hi = law.K_ci if law.K_ci is not None else (None, None)
            law_rows: list[FitRow] = [
                ("law_K", law.K, lo, hi),
                ("law_intercept", law.intercept, None, None),
                ("law_r_value", law.r_value, None, None),
            ]
            fit_rows.extend(law_rows)
            summary.append(f"diffusion law: {_format_rows(law_rows)}")

    if fit_rows:
        sections.append(fit_section(fit_rows, "fit"))

    result_file = ResultFile(metadata=file_metadata(config), sections=tuple(sections))
    files: list[pathlib.Path] = []
    if config.output_path is not None:
        files = write_result(result_file, config.output_path, config.output_format)
    for line in summary:
        _LOGGER.info("%s", line)
    return ExperimentReport(results=results, result_file=result_file, files=files, summary=summary)
