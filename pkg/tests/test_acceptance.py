"""Full-size checks of the physics against known results.

The ensemble checks run 10^3 to 10^4 trajectories and take minutes; they
are marked slow and run with ``pytest -m slow``.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from decoherent_qwalk.classical import brownian_params_for_links, brownian_variance, classical_evolve
from decoherent_qwalk.config import parse_config
from decoherent_qwalk.const import MODEL_BROKEN_LINKS, MODEL_COHERENT, MODEL_MEASURED
from decoherent_qwalk.ensemble import ensemble_run, trajectory_stream
from decoherent_qwalk.links import classify_site, coherence_time, run_broken_link_trajectory, sample_links, step_with_links
from decoherent_qwalk.measurement import build_propagators, kernel_q, master_evolve, simulate_measured_batch
from decoherent_qwalk.models import ClassicalDistribution, EnsembleSpec, MeasurementSchedule, SiteCase, SiteDistribution
from decoherent_qwalk.runner import run_experiment
from decoherent_qwalk.statistics import (
    crossover_time,
    default_tail,
    fit_diffusion,
    fit_quadratic_coefficient,
    gaussianity,
    regress_diffusion_law,
)
from decoherent_qwalk.walk import beta_terms, coherent_variance, moments, new_state, probabilities

_THREADS = 4


def _links(p: float, steps: int, trajectories: int, seed: int = 0, **kwargs) -> EnsembleSpec:
    return EnsembleSpec(
        model=MODEL_BROKEN_LINKS, steps=steps, trajectories=trajectories, master_seed=seed, p=p, **kwargs
    )


# ---------------------------------------------------------------------------
# Exact and fast
# ---------------------------------------------------------------------------


def test_coherent_quadratic_law():
    fit = fit_quadratic_coefficient(coherent_variance(200), (100, 200))
    assert fit.C == pytest.approx(0.293, abs=0.01)


def test_master_equation_variance():
    kernel = kernel_q(10)
    final = master_evolve(SiteDistribution.delta(0), kernel, 20)[-1]
    assert moments(final).variance == pytest.approx(20 * kernel.sigma_q2, rel=1e-9)


def test_classical_variance_is_exact():
    t = np.arange(10_001)
    for p in (0.0, 0.2, 0.9):
        _, series = classical_evolve(ClassicalDistribution.delta(p), 10_000)
        np.testing.assert_allclose(series.sigma2, (1 - p) * t, rtol=1e-9, atol=1e-9)


def test_case_identities_on_ten_thousand_sites(rng):
    checked = 0
    while checked < 10_000:
        state = new_state(capacity=16)
        for t in range(int(rng.integers(1, 14))):
            state = step_with_links(state, sample_links((-t - 1, t + 1), 0.3, rng))
        links = sample_links((-15, 15), 0.5, rng)
        P, beta = probabilities(state), beta_terms(state)
        after = probabilities(step_with_links(state, links))
        for n in range(-15, 16):
            j = state.index(n)
            case = classify_site(links, n)
            if case == SiteCase.INTACT:
                expected = 0.5 * (P[j + 1] + P[j - 1]) + beta[j + 1] - beta[j - 1]
            elif case == SiteCase.RIGHT_BROKEN:
                expected = 0.5 * (P[j - 1] + P[j]) - (beta[j - 1] + beta[j])
            elif case == SiteCase.LEFT_BROKEN:
                expected = 0.5 * (P[j] + P[j + 1]) + (beta[j] + beta[j + 1])
            else:
                expected = P[j]
            assert abs(after[j] - expected) < 1e-10
            checked += 1


# ---------------------------------------------------------------------------
# Measured walks
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_measured_histogram_matches_master_equation(hadamard):
    schedule = MeasurementSchedule.periodic(10)
    steps, trajectories = 200, 10_000
    props = build_propagators(schedule, steps, hadamard)
    batch = simulate_measured_batch(schedule, steps, props, [trajectory_stream(3, i) for i in range(trajectories)])
    sites = np.rint(batch.m1[:, steps]).astype(np.int64)

    expected = master_evolve(SiteDistribution.delta(0), kernel_q(10), 20)[-1]
    observed = np.array([np.count_nonzero(sites == n) for n in expected.sites], dtype=np.float64)
    assert observed.sum() == trajectories
    counts = expected.probabilities * trajectories
    # pool sparse bins so every expected count is at least 5
    big = counts >= 5
    f_obs = np.append(observed[big], observed[~big].sum())
    f_exp = np.append(counts[big], counts[~big].sum())
    assert stats.chisquare(f_obs, f_exp * f_obs.sum() / f_exp.sum()).pvalue > 0.001


@pytest.mark.slow
def test_random_intervals_match_period_seven():
    uniform = MeasurementSchedule.uniform_random(1, 10)
    periodic = MeasurementSchedule.periodic(7)
    fits = []
    for seed, schedule in enumerate((uniform, periodic)):
        spec = EnsembleSpec(MODEL_MEASURED, 700, trajectories=10_000, master_seed=seed, schedule=schedule)
        series = ensemble_run(spec, threads=_THREADS).series
        fits.append(fit_diffusion(series, default_tail(series, schedule.mean_interval / 2)))
    assert fits[0].D == pytest.approx(fits[1].D, rel=0.05)


# ---------------------------------------------------------------------------
# Broken links
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.5, 1.0])
def test_broken_link_norm(p):
    for i in range(100):
        record = run_broken_link_trajectory(p, 1000, trajectory_stream(0, i))
        assert record.max_norm_drift < 1e-10


@pytest.mark.slow
def test_diffusion_law_and_special_point():
    ps = [0.1, 0.2, 0.3, 0.4]
    ds = []
    for p in [*ps, 4 / 9]:
        series = ensemble_run(_links(p, 2000, 2000, seed=1), threads=_THREADS).series
        ds.append(fit_diffusion(series, default_tail(series, coherence_time(p))).D)
    law = regress_diffusion_law(ps, ds[:-1])
    assert 0.32 <= law.K <= 0.48
    assert 0.42 <= ds[-1] <= 0.58


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.05, 0.1])
def test_crossover_tracks_coherence_time(p):
    series = ensemble_run(_links(p, 2000, 1000, seed=2), threads=_THREADS).series
    estimate = crossover_time(series)
    assert estimate is not None
    t_c = 1 / (p * math.sqrt(2))
    assert t_c / 2 <= estimate.time <= 2 * t_c


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.1, 0.3, 0.4])
def test_brownian_overlay(p):
    series = ensemble_run(_links(p, 2000, 2000, seed=3), threads=_THREADS).series
    t, s2 = series.select(2 * coherence_time(p), 2000)
    curve = np.asarray(brownian_variance(brownian_params_for_links(p), t))
    assert np.max(np.abs(s2 - curve) / curve) < 0.25


@pytest.mark.slow
def test_averaged_distribution_becomes_gaussian():
    result = ensemble_run(_links(0.1, 1000, 10_000, seed=4, snapshots=(1000,)), threads=_THREADS)
    assert abs(gaussianity(result.snapshots[1000]).excess_kurtosis) < 0.2
    coherent = ensemble_run(EnsembleSpec(MODEL_COHERENT, 1000, snapshots=(1000,)))
    assert gaussianity(coherent.snapshots[1000]).excess_kurtosis < -0.5


# ---------------------------------------------------------------------------
# Reproducibility
# ---------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize(
    "flags",
    [
        {"model": "links", "p": 0.1, "steps": 500, "trajectories": 1000, "snapshots": [250, 500]},
        {"model": "measure", "interval_uniform": [1, 10], "steps": 500, "trajectories": 1000, "snapshots": [500]},
    ],
)
def test_files_identical_across_thread_counts(tmp_path, flags):
    contents = []
    for threads in (1, 4):
        out = tmp_path / f"threads{threads}" / "run.csv"
        report = run_experiment(parse_config({**flags, "threads": threads, "output_path": str(out)}))
        contents.append([path.read_bytes() for path in report.files])
    assert contents[0] == contents[1]
