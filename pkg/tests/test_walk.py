"""Unit tests for walk.py – the coherent coined walk."""

from __future__ import annotations

import math

import numpy as np
import pytest

from decoherent_qwalk.const import DEFAULT_QUBIT, HADAMARD_THETA
from decoherent_qwalk.exceptions import CapacityExceededError
from decoherent_qwalk.models import SiteDistribution, SpinorField
from decoherent_qwalk.statistics import fit_quadratic_coefficient
from decoherent_qwalk.walk import (
    apply_coin_shift,
    beta_terms,
    check_qubit,
    coherent_variance,
    coin_operator,
    distribution,
    evolve,
    inner_product,
    localized_like,
    moments,
    new_state,
    norm,
    probabilities,
    step,
)

_S = 1 / math.sqrt(2)


def _evolved(steps: int, qubit=DEFAULT_QUBIT, capacity: int | None = None) -> SpinorField:
    state = new_state(qubit, 0, capacity=capacity or steps)
    for _ in range(steps):
        state = step(state)
    return state


# ---------------------------------------------------------------------------
# coin_operator
# ---------------------------------------------------------------------------


class TestCoinOperator:
    def test_hadamard_at_pi_over_4(self):
        coin = coin_operator(HADAMARD_THETA)
        np.testing.assert_allclose(coin.matrix, np.array([[1, 1], [1, -1]]) * _S, atol=1e-15)

    def test_sigma_z_at_zero(self):
        np.testing.assert_array_equal(coin_operator(0.0).matrix, np.array([[1, 0], [0, -1]]))

    def test_sigma_x_at_pi_over_2(self):
        np.testing.assert_allclose(coin_operator(math.pi / 2).matrix, np.array([[0, 1], [1, 0]]), atol=1e-15)

    @pytest.mark.parametrize("theta", [0.0, 0.3, HADAMARD_THETA, 1.2, math.pi])
    def test_unitary(self, theta):
        k = coin_operator(theta).matrix
        np.testing.assert_allclose(k.conj().T @ k, np.eye(2), atol=1e-14)

    def test_matrix_is_read_only(self):
        with pytest.raises(ValueError, match="read-only"):
            coin_operator().matrix[0, 0] = 2

    @pytest.mark.parametrize("theta", [math.inf, math.nan])
    def test_non_finite_angle_rejected(self, theta):
        with pytest.raises(ValueError, match="finite"):
            coin_operator(theta)


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


class TestNewState:
    def test_localized_at_origin(self):
        state = new_state(DEFAULT_QUBIT, 0, capacity=5)
        assert state.qubit_at(0) == pytest.approx(DEFAULT_QUBIT)
        assert norm(state) == pytest.approx(1.0, abs=1e-15)
        assert probabilities(state)[state.index(0)] == pytest.approx(1.0, abs=1e-15)

    def test_localized_elsewhere(self):
        state = new_state((1, 0), 7, capacity=3)
        assert state.qubit_at(7) == (1, 0)
        assert state.center == 7
        assert int(state.sites[0]) == 7 - 4

    def test_window_size_matches_capacity(self):
        state = new_state(capacity=10)
        assert state.size == 23
        assert state.capacity == 10

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError, match="capacity must be >= 1"):
            new_state(capacity=0)

    @pytest.mark.parametrize("qubit", [(1, 1), (0, 0), (0.5, 0.5j)])
    def test_unnormalized_qubit_rejected(self, qubit):
        with pytest.raises(ValueError, match="normalized"):
            new_state(qubit)

    def test_check_qubit_returns_complex_pair(self):
        a, b = check_qubit((1, 0))
        assert isinstance(a, complex)
        assert isinstance(b, complex)

    def test_amplitudes_are_read_only(self):
        state = new_state()
        with pytest.raises(ValueError, match="read-only"):
            state.a[0] = 1

    def test_index_outside_window(self):
        with pytest.raises(IndexError, match="outside window"):
            new_state(capacity=2).index(10)


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------


class TestStep:
    def test_first_step_splits_evenly(self):
        dist = distribution(_evolved(1))
        assert dist.at(-1) == pytest.approx(0.5, abs=1e-15)
        assert dist.at(1) == pytest.approx(0.5, abs=1e-15)
        assert dist.at(0) == 0.0

    def test_upper_component_moves_left(self):
        state = step(new_state((1, 0), 0, capacity=2), coin_operator(0.0))
        assert state.qubit_at(-1) == (1, 0)
        assert norm(state) == 1.0

    def test_lower_component_moves_right(self):
        state = step(new_state((0, 1), 0, capacity=2), coin_operator(0.0))
        assert state.qubit_at(1) == (0, -1)

    def test_norm_preserved(self):
        state = new_state(capacity=300)
        for _ in range(300):
            state = step(state)
        assert abs(norm(state) - 1.0) < 1e-10

    def test_light_cone_and_parity(self):
        t = 25
        dist = distribution(_evolved(t, capacity=30))
        for n, p in zip(dist.sites, dist.probabilities, strict=True):
            if abs(n) > t or (n + t) % 2:
                assert p == 0.0

    def test_symmetric_initial_state_gives_symmetric_distribution(self):
        dist = distribution(_evolved(50))
        for n in range(1, 51):
            assert dist.at(n) == pytest.approx(dist.at(-n), abs=1e-14)

    def test_time_advances(self):
        assert _evolved(3).time == 3

    def test_capacity_exceeded(self):
        state = new_state(capacity=2)
        state = step(step(state))
        with pytest.raises(CapacityExceededError, match="window edge"):
            step(state)

    def test_unitarity_preserves_inner_products(self):
        first = new_state(DEFAULT_QUBIT, 0, capacity=30)
        second = localized_like(first, (0.6, 0.8j), 3)
        before = inner_product(first, second)
        for _ in range(20):
            first, second = step(first), step(second)
        assert inner_product(first, second) == pytest.approx(before, abs=1e-13)
        assert inner_product(first, first) == pytest.approx(1.0, abs=1e-13)

    def test_inner_product_needs_same_window(self):
        with pytest.raises(ValueError, match="different windows"):
            inner_product(new_state(capacity=2), new_state(capacity=3))

    def test_batched_update_matches_single(self, hadamard):
        states = [_evolved(4, DEFAULT_QUBIT, capacity=6), _evolved(4, (1, 0), capacity=6)]
        a = np.stack([s.a for s in states])
        b = np.stack([s.b for s in states])
        new_a, new_b = apply_coin_shift(a, b, hadamard.matrix)
        for row, state in enumerate(states):
            single = step(state, hadamard)
            np.testing.assert_array_equal(new_a[row], single.a)
            np.testing.assert_array_equal(new_b[row], single.b)


# ---------------------------------------------------------------------------
# Moments and coherence terms
# ---------------------------------------------------------------------------


class TestMoments:
    def test_delta(self):
        mom = moments(SiteDistribution.delta(3))
        assert (mom.m1, mom.m2, mom.variance) == (3.0, 9.0, 0.0)

    def test_two_point(self):
        mom = moments(SiteDistribution.from_mapping({-1: 0.5, 1: 0.5}))
        assert mom.m1 == 0.0
        assert mom.variance == 1.0

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError, match="must sum to 1"):
            moments(SiteDistribution.from_array(0, [0.5, 0.2]))

    def test_beta_vanishes_for_symmetric_qubit(self):
        state = new_state(capacity=3)
        assert beta_terms(state)[state.index(0)] == pytest.approx(0.0, abs=1e-16)

    def test_beta_of_real_equal_qubit(self):
        state = new_state((_S, _S), 0, capacity=3)
        assert beta_terms(state)[state.index(0)] == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# evolve / coherent_variance
# ---------------------------------------------------------------------------


class TestCoherentVariance:
    def test_evolve_records_every_step(self):
        state, records = evolve(new_state(capacity=10), steps=10)
        assert len(records) == 10
        assert state.time == 10
        assert records[0].variance == pytest.approx(1.0)

    def test_series_starts_at_zero(self):
        series = coherent_variance(20)
        assert len(series) == 21
        assert series.sigma2[0] == 0.0
        assert series.sigma2[1] == pytest.approx(1.0)

    def test_variance_grows_quadratically(self):
        fit = fit_quadratic_coefficient(coherent_variance(200), (100, 200))
        assert fit.C == pytest.approx(0.293, abs=0.01)
        assert not fit.poor

    def test_sigma_z_coin_is_ballistic(self):
        # theta = 0 never mixes chiralities: the two halves fly apart at unit speed
        series = coherent_variance(10, theta=0.0)
        np.testing.assert_allclose(series.sigma2, np.arange(11.0) ** 2, atol=1e-12)
