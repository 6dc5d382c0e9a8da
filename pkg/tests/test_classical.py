"""Unit tests for classical.py – classical master equation and the Brownian curve."""

from __future__ import annotations

import numpy as np
import pytest

from decoherent_qwalk.classical import (
    brownian_crossover_time,
    brownian_diffusion,
    brownian_params_for_links,
    brownian_params_for_period,
    brownian_slope,
    brownian_variance,
    classical_evolve,
    classical_step,
    d_cl,
    gamma_from_p,
    gamma_from_period,
    weighted_case_update,
)
from decoherent_qwalk.exceptions import OutOfDomainError
from decoherent_qwalk.models import BrownianParams, ClassicalDistribution, SiteDistribution
from decoherent_qwalk.walk import moments

# ---------------------------------------------------------------------------
# Classical walk
# ---------------------------------------------------------------------------


class TestClassicalStep:
    def test_first_step(self):
        dist = classical_step(ClassicalDistribution.delta(0.2)).distribution
        assert dist.at(-1) == pytest.approx(0.4)
        assert dist.at(0) == pytest.approx(0.2)
        assert dist.at(1) == pytest.approx(0.4)

    def test_p_one_never_moves(self):
        state, series = classical_evolve(ClassicalDistribution.delta(1.0, site=3), 10)
        assert state.distribution.at(3) == 1.0
        assert np.all(series.sigma2 == 0)

    @pytest.mark.parametrize("p", [0.0, 0.2, 0.5])
    def test_variance_is_linear(self, p):
        _, series = classical_evolve(ClassicalDistribution.delta(p), 100)
        np.testing.assert_allclose(series.sigma2, (1 - p) * np.arange(101), rtol=1e-10, atol=1e-12)

    def test_norm_conserved(self):
        state, _ = classical_evolve(ClassicalDistribution.delta(0.3), 50)
        assert state.distribution.total == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p", [-0.1, 1.1])
    def test_invalid_stay_probability(self, p):
        with pytest.raises(ValueError, match="stay probability"):
            ClassicalDistribution.delta(p)


class TestWeightedCaseUpdate:
    @pytest.mark.parametrize("p", [0.0, 0.1, 0.45, 1.0])
    def test_no_coherence_is_classical(self, rng, p):
        probs = rng.random(15)
        probs /= probs.sum()
        classical = classical_step(ClassicalDistribution(SiteDistribution.from_array(-7, probs), p))
        updated = weighted_case_update(probs, np.zeros_like(probs), p)
        np.testing.assert_allclose(updated, classical.distribution.probabilities, atol=1e-15)

    def test_coherence_shifts_weight(self):
        # beta > 0 at one site favours the left-moving flux out of it
        updated = weighted_case_update(np.array([1.0]), np.array([0.25]), 0.0)
        np.testing.assert_allclose(updated, [0.75, 0.0, 0.25])

    def test_norm_preserved(self, rng):
        probs = rng.random(9)
        probs /= probs.sum()
        beta = 0.1 * rng.standard_normal(9)
        assert weighted_case_update(probs, beta, 0.3).sum() == pytest.approx(1.0, abs=1e-14)


class TestDiffusionCoefficient:
    @pytest.mark.parametrize(("p", "expected"), [(0.0, 0.5), (0.2, 0.4), (1.0, 0.0)])
    def test_d_cl(self, p, expected):
        assert d_cl(p) == pytest.approx(expected)

    def test_d_cl_matches_evolution(self):
        _, series = classical_evolve(ClassicalDistribution.delta(0.2), 60)
        slope = (series.sigma2[-1] - series.sigma2[10]) / 50
        assert slope / 2 == pytest.approx(d_cl(0.2))

    def test_invalid(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            d_cl(1.2)


# ---------------------------------------------------------------------------
# Brownian curve
# ---------------------------------------------------------------------------


class TestBrownianVariance:
    params = BrownianParams(C=0.293, gamma=0.1)

    def test_starts_at_zero(self):
        assert brownian_variance(self.params, 0.0) == 0.0

    def test_ballistic_at_short_times(self):
        assert brownian_variance(self.params, 0.01) == pytest.approx(0.293 * 1e-4, rel=1e-3)

    def test_diffusive_at_long_times(self):
        t = 1e5
        assert brownian_variance(self.params, t) == pytest.approx(brownian_slope(self.params) * (t - 10), rel=1e-12)

    def test_series_and_closed_form_meet(self):
        gamma = self.params.gamma
        edge = 1e-4 / gamma
        below = brownian_variance(self.params, edge * (1 - 1e-9))
        above = brownian_variance(self.params, edge * (1 + 1e-9))
        assert above == pytest.approx(below, rel=1e-7)

    def test_array_input(self):
        out = brownian_variance(self.params, np.array([0.0, 1.0, 10.0]))
        assert isinstance(out, np.ndarray)
        assert out.shape == (3,)
        assert np.all(np.diff(out) > 0)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError, match="t must be >= 0"):
            brownian_variance(self.params, -1.0)

    def test_long_time_coefficients(self):
        assert brownian_diffusion(self.params) == pytest.approx(2.93)
        assert brownian_slope(self.params) == pytest.approx(5.86)

    @pytest.mark.parametrize(("C", "gamma"), [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, float("inf"))])
    def test_invalid_params(self, C, gamma):
        with pytest.raises(ValueError, match="must be positive"):
            BrownianParams(C=C, gamma=gamma)


class TestGamma:
    def test_from_period(self):
        assert gamma_from_period(10) == pytest.approx(0.2)
        assert brownian_params_for_period(10).gamma == pytest.approx(0.2)

    def test_from_p(self):
        assert gamma_from_p(0.5) == pytest.approx(0.73)
        params = brownian_params_for_links(0.1)
        assert params.C == 0.293
        assert params.gamma == pytest.approx(0.73 / 9)

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_from_p_domain(self, p):
        with pytest.raises(OutOfDomainError, match="0 < p < 1"):
            gamma_from_p(p)

    def test_from_period_domain(self):
        with pytest.raises(ValueError, match="period must be >= 1"):
            gamma_from_period(0.5)


class TestBrownianCrossover:
    @pytest.mark.parametrize("gamma", [0.01, 0.1, 2.0])
    def test_midpoint_slope(self, gamma):
        params = BrownianParams(C=0.293, gamma=gamma)
        assert brownian_crossover_time(params) * gamma == pytest.approx(2.15, abs=0.01)

    def test_local_slope_at_crossover(self):
        params = BrownianParams(C=0.293, gamma=0.05)
        t = brownian_crossover_time(params)
        h = 1e-4 * t
        slope = (np.log(brownian_variance(params, t + h)) - np.log(brownian_variance(params, t - h))) / (
            np.log(t + h) - np.log(t - h)
        )
        assert slope == pytest.approx(1.5, abs=1e-5)

    def test_lower_threshold_is_later(self):
        params = BrownianParams(C=0.293, gamma=0.1)
        assert brownian_crossover_time(params, 1.2) > brownian_crossover_time(params, 1.8)

    @pytest.mark.parametrize("threshold", [1.0, 2.0, 0.5])
    def test_threshold_range(self, threshold):
        with pytest.raises(ValueError, match="strictly between 1 and 2"):
            brownian_crossover_time(BrownianParams(C=0.293, gamma=0.1), threshold)


class TestClassicalMoments:
    def test_moments_of_evolved_state(self):
        state, _ = classical_evolve(ClassicalDistribution.delta(0.0, site=5), 4)
        mom = moments(state.distribution)
        assert mom.m1 == pytest.approx(5.0)
        assert mom.variance == pytest.approx(4.0)
