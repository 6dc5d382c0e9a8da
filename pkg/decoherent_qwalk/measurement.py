"""Decoherence by repeated joint position / sigma_y chirality measurements.

Between measurements the walker evolves coherently.  A measurement samples a
site n with probability P_n (Born rule), then projects the qubit at n onto
one of the sigma_y eigenvectors (1/sqrt2)(1, +-i).  The position distribution
of the ensemble then obeys a master equation whose kernel q_n is the
coherent distribution after one interval.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .const import COHERENT_C, DEFAULT_QUBIT
from .exceptions import InvalidStateError
from .models import (
    CoinOperator,
    CollapseOutcome,
    KernelQ,
    MeasuredTrajectory,
    MeasurementSchedule,
    SiteDistribution,
    SpinorField,
    TrajectoryBatch,
)
from .walk import (
    check_qubit,
    coin_operator,
    density,
    distribution,
    localized_like,
    moments,
    new_state,
    probabilities,
    step,
)

_LOGGER = logging.getLogger(__name__)

_SQRT_HALF = 1 / math.sqrt(2)

# Post-measurement qubit for each sigma_y eigenvalue.
Y_EIGENSTATES: dict[int, tuple[complex, complex]] = {
    1: (complex(_SQRT_HALF, 0.0), complex(0.0, _SQRT_HALF)),
    -1: (complex(_SQRT_HALF, 0.0), complex(0.0, -_SQRT_HALF)),
}

# Propagator key of the first interval (before any collapse).
_INITIAL = 0


def _plus_probability(ar: Any, ai: Any, br: Any, bi: Any) -> Any:
    """|<+y|psi>|^2 = |a - i b|^2 / 2 for a normalized qubit, scalar or array."""
    re = ar + bi
    im = ai - br
    return (re * re + im * im) / 2


def _inverse_cdf(cdf: NDArray[np.float64], last_positive: int, u: float) -> int:
    """Index of the first cell whose cumulative weight exceeds u * total."""
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, last_positive)


# ---------------------------------------------------------------------------
# Single measurements
# ---------------------------------------------------------------------------


def measure_position(state: SpinorField, u: float) -> tuple[int, SpinorField]:
    """Sample a site by inverse CDF over ascending sites; return it with the conditional state.

    The conditional state keeps only the measured site's qubit, renormalized.
    """
    probs = probabilities(state)
    positive = np.flatnonzero(probs > 0)
    if positive.size == 0:
        raise InvalidStateError(f"cannot measure an all-zero state (t={state.time})")
    idx = _inverse_cdf(np.cumsum(probs), int(positive[-1]), u)
    scale = math.sqrt(float(probs[idx]))
    a, b = state.a[idx], state.b[idx]
    qubit = (complex(a.real / scale, a.imag / scale), complex(b.real / scale, b.imag / scale))
    site = idx - state.origin
    return site, localized_like(state, qubit, site)


def measure_chirality_y(qubit: tuple[complex, complex], u: float) -> tuple[int, tuple[complex, complex]]:
    """Project *qubit* onto a sigma_y eigenvector; sign +1 is chosen when u < p(+1)."""
    a, b = check_qubit(qubit)
    p_plus = _plus_probability(a.real, a.imag, b.real, b.imag)
    sign = 1 if u < p_plus else -1
    return sign, Y_EIGENSTATES[sign]


def collapse(state: SpinorField, u_position: float, u_chirality: float) -> CollapseOutcome:
    """Joint measurement: position first, then chirality at the measured site."""
    site, conditional = measure_position(state, u_position)
    sign, qubit = measure_chirality_y(conditional.qubit_at(site), u_chirality)
    return CollapseOutcome(site=site, chirality_sign=sign, post_state=localized_like(state, qubit, site))


# ---------------------------------------------------------------------------
# Master equation
# ---------------------------------------------------------------------------


def kernel_q(
    period: int,
    coin: CoinOperator | None = None,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> KernelQ:
    """Coherent distribution q_n = P_n(T) from a localized state, on offsets -T..T."""
    if period < 1:
        raise ValueError(f"period must be >= 1 (got {period})")
    coin = coin_operator() if coin is None else coin
    state = new_state(qubit, 0, capacity=period)
    for _ in range(period):
        state = step(state, coin)
    lo, hi = state.index(-period), state.index(period) + 1
    q = probabilities(state)[lo:hi]
    q.setflags(write=False)
    mom = moments(SiteDistribution.from_array(-period, q))
    return KernelQ(period=period, q=q, m1q=mom.m1, m2q=mom.m2, sigma_q2=mom.variance)


def master_step(dist: SiteDistribution, kernel: KernelQ) -> SiteDistribution:
    """P'(n) = sum_j q_{n-j} P(j): one measurement period of the ensemble distribution."""
    probs = np.convolve(dist.probabilities, kernel.q)
    return SiteDistribution.from_array(int(dist.sites[0]) - kernel.period, probs)


def master_evolve(dist: SiteDistribution, kernel: KernelQ, periods: int) -> list[SiteDistribution]:
    """Apply master_step *periods* times; returns the distribution after each application."""
    out: list[SiteDistribution] = []
    for _ in range(periods):
        dist = master_step(dist, kernel)
        out.append(dist)
    return out


def moment_step(m1: float, m2: float, kernel: KernelQ) -> tuple[float, float]:
    """Exact moment recursion over one period of the master equation."""
    return m1 + kernel.m1q, m2 + 2 * m1 * kernel.m1q + kernel.m2q


def kernel_mismatch(period: int, coin: CoinOperator | None = None) -> float:
    """max_n |q+_n - q-_n| between the kernels restarting from either collapse sign."""
    plus = kernel_q(period, coin, Y_EIGENSTATES[1])
    minus = kernel_q(period, coin, Y_EIGENSTATES[-1])
    mismatch = float(np.max(np.abs(plus.q - minus.q)))
    if mismatch > 1e-12:
        _LOGGER.warning("Collapse-sign kernels differ at T=%d: max |q+ - q-| = %.3g", period, mismatch)
    return mismatch


# ---------------------------------------------------------------------------
# Diffusion coefficients
# ---------------------------------------------------------------------------


def d_rm_periodic(
    period: int,
    C: float | None = None,
    *,
    coin: CoinOperator | None = None,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> float:
    """D for measurements every T steps.

    With *C* given this is the asymptotic form C T / 2; otherwise the exact
    sigma_q^2(T) / 2T from the kernel.
    """
    if period < 1:
        raise ValueError(f"period must be >= 1 (got {period})")
    if C is not None:
        return C * period / 2
    return kernel_q(period, coin, qubit).sigma_q2 / (2 * period)


def d_rm_random(schedule: MeasurementSchedule, C: float = COHERENT_C) -> float:
    """C * mean(T^2) / (2 * mean(T)) for randomly distributed intervals."""
    return C * schedule.mean_square_interval / (2 * schedule.mean_interval)


def d_rm_random_exact(
    schedule: MeasurementSchedule,
    coin: CoinOperator | None = None,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> float:
    """Diffusion coefficient from the true kernels of every interval length.

    The displacement over one interval has variance E[M2q(T)] - E[M1q(T)]^2
    across the interval distribution; D is that over twice the mean interval.
    """
    e_m1 = 0.0
    e_m2 = 0.0
    for length, weight in schedule.support():
        kernel = kernel_q(length, coin, qubit)
        e_m1 += weight * kernel.m1q
        e_m2 += weight * kernel.m2q
    return (e_m2 - e_m1 * e_m1) / (2 * schedule.mean_interval)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def run_measured_trajectory(
    schedule: MeasurementSchedule,
    total_steps: int,
    coin: CoinOperator | None,
    rng: np.random.Generator,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> MeasuredTrajectory:
    """Evolve one trajectory, collapsing it at every scheduled measurement time.

    Draw order on *rng*: one uniform for the first interval when the schedule
    is random, then per measurement u_position, u_chirality and the next
    interval's uniform.  A measurement at time t acts on the state produced by
    the step to t; the recorded moments at t are those after the collapse.
    """
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1 (got {total_steps})")
    coin = coin_operator() if coin is None else coin
    state = new_state(qubit, 0, capacity=total_steps)
    m1 = np.zeros(total_steps + 1)
    m2 = np.zeros(total_steps + 1)
    times: list[int] = []
    sites: list[int] = []
    signs: list[int] = []

    def next_interval() -> int:
        return schedule.interval(len(times), rng.random() if schedule.needs_draw else None)

    next_time = next_interval()
    for t in range(1, total_steps + 1):
        state = step(state, coin)
        if t == next_time:
            outcome = collapse(state, rng.random(), rng.random())
            state = outcome.post_state
            times.append(t)
            sites.append(outcome.site)
            signs.append(outcome.chirality_sign)
            next_time = t + next_interval()
        mom = moments(distribution(state))
        m1[t] = mom.m1
        m2[t] = mom.m2

    return MeasuredTrajectory(
        m1=m1,
        m2=m2,
        measurement_times=tuple(times),
        measured_sites=tuple(sites),
        chirality_signs=tuple(signs),
        final_state=state,
    )


@dataclass(frozen=True, eq=False)
class Propagator:
    """Coherent evolution from one localized qubit, tabulated for k = 0..kmax steps.

    ``probs[k]``, ``cdfs[k]`` and ``plus[k]`` live on offsets -k..k; ``plus``
    is the sigma_y +1 probability of the conditional qubit at each offset.
    """

    probs: tuple[NDArray[np.float64], ...]
    cdfs: tuple[NDArray[np.float64], ...]
    last_positive: tuple[int, ...]
    plus: tuple[NDArray[np.float64], ...]
    m1: NDArray[np.float64]
    m2: NDArray[np.float64]

    @classmethod
    def build(cls, qubit: tuple[complex, complex], coin: CoinOperator, kmax: int) -> Propagator:
        state = new_state(qubit, 0, capacity=max(kmax, 1))
        probs, cdfs, last, plus = [], [], [], []
        m1 = np.zeros(kmax + 1)
        m2 = np.zeros(kmax + 1)
        for k in range(kmax + 1):
            if k:
                state = step(state, coin)
            lo, hi = state.index(-k), state.index(k) + 1
            a, b = state.a[lo:hi], state.b[lo:hi]
            p = density(a, b)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.sqrt(p)
                pp = _plus_probability(a.real / scale, a.imag / scale, b.real / scale, b.imag / scale)
            offsets = np.arange(-k, k + 1, dtype=np.float64)
            probs.append(p)
            cdfs.append(np.cumsum(p))
            last.append(int(np.flatnonzero(p > 0)[-1]))
            plus.append(np.where(p > 0, pp, 0.0))
            m1[k] = np.dot(offsets, p)
            m2[k] = np.dot(offsets * offsets, p)
        return cls(tuple(probs), tuple(cdfs), tuple(last), tuple(plus), m1, m2)

    @property
    def kmax(self) -> int:
        return len(self.probs) - 1

    @property
    def norm_drift(self) -> float:
        return max(abs(float(cdf[-1]) - 1.0) for cdf in self.cdfs)


def build_propagators(
    schedule: MeasurementSchedule,
    steps: int,
    coin: CoinOperator,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> dict[int, Propagator]:
    """Propagators for the initial qubit (key 0) and both collapse signs (keys +1, -1)."""
    kmax = min(schedule.max_interval, steps)
    props = {_INITIAL: Propagator.build(qubit, coin, kmax)}
    for sign, eigen in Y_EIGENSTATES.items():
        props[sign] = Propagator.build(eigen, coin, kmax)
    _LOGGER.debug("Built measurement propagators up to k=%d for %s", kmax, schedule.describe())
    return props


def draws_per_trajectory(schedule: MeasurementSchedule, steps: int) -> int:
    """Upper bound on the uniforms one trajectory consumes."""
    shortest = min(length for length, _ in schedule.support())
    per_measurement = 3 if schedule.needs_draw else 2
    return int(schedule.needs_draw) + per_measurement * (steps // shortest)


def _draw_interval(
    schedule: MeasurementSchedule, count: int, draws: NDArray[np.float64], d: int
) -> tuple[int, int]:
    """Next interval length and the advanced draw cursor."""
    if schedule.needs_draw:
        return schedule.interval(count, float(draws[d])), d + 1
    return schedule.interval(count), d


def simulate_measured_batch(
    schedule: MeasurementSchedule,
    steps: int,
    propagators: dict[int, Propagator],
    generators: Sequence[np.random.Generator],
    snapshots: Sequence[int] = (),
) -> TrajectoryBatch:
    """Moments of many measured trajectories from tabulated propagators.

    Uses the same uniforms in the same order as run_measured_trajectory, so
    measurement sites and chirality signs agree with it exactly; between
    measurements the moments come from the tables:

        M1(t) = x + m1[k],    M2(t) = x^2 + 2 x m1[k] + m2[k]

    with x the last measured site and k the steps since.
    """
    n = len(generators)
    m1 = np.zeros((n, steps + 1))
    m2 = np.zeros((n, steps + 1))
    sums = {t: np.zeros(2 * t + 1) for t in snapshots}
    budget = draws_per_trajectory(schedule, steps)

    for row, gen in enumerate(generators):
        draws = gen.random(budget)
        count = 0
        pos, key, start = 0, _INITIAL, 0
        length, d = _draw_interval(schedule, count, draws, 0)
        while True:
            prop = propagators[key]
            end = start + length
            last = min(end - 1, steps)
            ks = slice(0, last - start + 1)
            m1[row, start : last + 1] = pos + prop.m1[ks]
            m2[row, start : last + 1] = pos * pos + 2 * pos * prop.m1[ks] + prop.m2[ks]
            for t, acc in sums.items():
                if start <= t <= last:
                    k = t - start
                    lo = pos - k + t
                    acc[lo : lo + 2 * k + 1] += prop.probs[k]
            if end > steps:
                break
            idx = _inverse_cdf(prop.cdfs[length], prop.last_positive[length], float(draws[d]))
            sign = 1 if float(draws[d + 1]) < prop.plus[length][idx] else -1
            d += 2
            pos, key, start = pos + idx - length, sign, end
            count += 1
            length, d = _draw_interval(schedule, count, draws, d)

    drift = max(p.norm_drift for p in propagators.values())
    return TrajectoryBatch(m1=m1, m2=m2, snapshot_sums=sums, max_norm_drift=drift)
