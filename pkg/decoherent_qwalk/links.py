"""Decoherence by randomly broken links.

At every step each link between neighbouring sites breaks independently with
probability p.  Flux that would cross a broken link is reflected into the
other chirality component of the same site, so each trajectory is still a
sequence of unitary maps; decoherence only appears in the ensemble average.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np

from .const import BROKEN_LINK_K, CONFINEMENT_P, DEFAULT_QUBIT
from .exceptions import OutOfDomainError
from .models import BrokenLinkRecord, CoinOperator, LinkConfig, SiteCase, SiteDistribution, SpinorField, TrajectoryBatch
from .walk import apply_coin_shift, check_qubit, check_room, coin_operator, density, distribution, moments, new_state

_LOGGER = logging.getLogger(__name__)


def _check_p(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"link-breaking probability must be in [0, 1] (got {p})")
    return float(p)


def sample_links(window: tuple[int, int], p: float, rng: np.random.Generator) -> LinkConfig:
    """Sample the links between sites lo..hi, i.e. hi - lo links in ascending order."""
    p = _check_p(p)
    lo, hi = window
    if hi < lo:
        raise ValueError(f"empty link window [{lo}, {hi}]")
    return LinkConfig(rng.random(hi - lo) < p, lo, p)


def classify_site(links: LinkConfig, site: int) -> SiteCase:
    """Which of the links (site-1, site) and (site, site+1) are broken."""
    left = links.is_broken(site - 1)
    right = links.is_broken(site)
    if left and right:
        return SiteCase.ISOLATED
    if left:
        return SiteCase.LEFT_BROKEN
    if right:
        return SiteCase.RIGHT_BROKEN
    return SiteCase.INTACT


def case_weights(p: float) -> dict[SiteCase, float]:
    """Probability of each site case for independent links: (1-p)^2, p(1-p), p(1-p), p^2."""
    p = _check_p(p)
    return {
        SiteCase.INTACT: (1 - p) ** 2,
        SiteCase.LEFT_BROKEN: p * (1 - p),
        SiteCase.RIGHT_BROKEN: p * (1 - p),
        SiteCase.ISOLATED: p * p,
    }


def is_confinement_dominated(p: float) -> bool:
    """True when links break so often that the wavefunction stays near the origin."""
    return p > CONFINEMENT_P


def step_with_links(state: SpinorField, links: LinkConfig, coin: CoinOperator | None = None) -> SpinorField:
    """One step in which no flux crosses a broken link.

    For the Hadamard coin, a left-broken site n gets
    b_n' = (a_n + b_n)/sqrt2 instead of the flux from n-1; a right-broken site
    gets a_n' = (a_n - b_n)/sqrt2 instead of the flux from n+1.
    """
    check_room(state)
    matrix = coin_operator().matrix if coin is None else coin.matrix
    broken = np.zeros(state.size - 1, dtype=bool)
    # storage link j joins cells j and j+1
    first = links.first_site + state.origin
    lo, hi = max(first, 0), min(first + links.broken.shape[0], state.size - 1)
    if lo < hi:
        broken[lo:hi] = links.broken[lo - first : hi - first]
    a, b = apply_coin_shift(state.a, state.b, matrix, broken)
    return SpinorField(a=a, b=b, origin=state.origin, time=state.time + 1, center=state.center)


def coherence_time(p: float) -> float | None:
    """t_c = 1/(p sqrt2); None when p = 0 (coherence is never lost)."""
    p = _check_p(p)
    if p == 0:
        return None
    return 1 / (p * math.sqrt(2))


def d_bl(p: float, K: float = BROKEN_LINK_K) -> float:
    """Broken-link diffusion coefficient K (1-p)/p on 0 < p < 1."""
    if not 0.0 < p < 1.0:
        raise OutOfDomainError(f"d_bl needs 0 < p < 1 (got {p})")
    return K * (1 - p) / p


def run_broken_link_trajectory(
    p: float,
    steps: int,
    rng: np.random.Generator,
    coin: CoinOperator | None = None,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
    snapshots: Sequence[int] = (),
) -> BrokenLinkRecord:
    """Evolve one trajectory: at step t -> t+1 sample links with left sites -t-1..t, then step."""
    p = _check_p(p)
    if steps < 1:
        raise ValueError(f"steps must be >= 1 (got {steps})")
    coin = coin_operator() if coin is None else coin
    state = new_state(qubit, 0, capacity=steps)
    m1 = np.zeros(steps + 1)
    m2 = np.zeros(steps + 1)
    drift = 0.0
    wanted = set(snapshots)
    shots: dict[int, SiteDistribution] = {}
    if 0 in wanted:
        shots[0] = SiteDistribution.delta(0)

    for t in range(steps):
        links = sample_links((-t - 1, t + 1), p, rng)
        state = step_with_links(state, links, coin)
        dist = distribution(state)
        drift = max(drift, abs(dist.total - 1.0))
        mom = moments(dist)
        m1[t + 1] = mom.m1
        m2[t + 1] = mom.m2
        if t + 1 in wanted:
            lo, hi = state.index(-t - 1), state.index(t + 1) + 1
            shots[t + 1] = SiteDistribution.from_array(-t - 1, dist.probabilities[lo:hi])

    return BrokenLinkRecord(p=p, m1=m1, m2=m2, max_norm_drift=drift, final_state=state, snapshots=shots)


def simulate_links_batch(
    p: float,
    steps: int,
    coin: CoinOperator,
    generators: Sequence[np.random.Generator],
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
    snapshots: Sequence[int] = (),
) -> TrajectoryBatch:
    """Evolve one trajectory per generator side by side.

    Each generator is consumed exactly as in run_broken_link_trajectory, and
    the amplitudes agree with it bit for bit.  Step t only touches the cells
    of sites -t-1..t+1, the reach of the light cone.
    """
    p = _check_p(p)
    a0, b0 = check_qubit(qubit)
    n = len(generators)
    origin = steps + 1
    a = np.zeros((n, 2 * steps + 3), dtype=np.complex128)
    b = np.zeros_like(a)
    a[:, origin] = a0
    b[:, origin] = b0
    m1 = np.zeros((n, steps + 1))
    m2 = np.zeros((n, steps + 1))
    wanted = set(snapshots)
    sums: dict[int, np.ndarray] = {}
    if 0 in wanted:
        sums[0] = density(a[:, origin : origin + 1], b[:, origin : origin + 1]).sum(axis=0)
    drift = 0.0

    for t in range(steps):
        cells = slice(origin - t - 1, origin + t + 2)
        broken = np.stack([gen.random(2 * t + 2) < p for gen in generators])
        a[:, cells], b[:, cells] = apply_coin_shift(a[:, cells], b[:, cells], coin.matrix, broken)
        probs = density(a[:, cells], b[:, cells])
        sites = np.arange(-t - 1, t + 2, dtype=np.float64)
        m1[:, t + 1] = (probs * sites).sum(axis=1)
        m2[:, t + 1] = (probs * (sites * sites)).sum(axis=1)
        drift = max(drift, float(np.max(np.abs(probs.sum(axis=1) - 1.0))))
        if t + 1 in wanted:
            sums[t + 1] = probs.sum(axis=0)

    _LOGGER.debug("Broken-link batch of %d trajectories, p=%.4g, %d steps: max norm drift %.3g", n, p, steps, drift)
    return TrajectoryBatch(m1=m1, m2=m2, snapshot_sums=sums, max_norm_drift=drift)
