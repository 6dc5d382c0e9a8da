"""Coherent coined quantum walk on a bounded lattice window.

A step applies the coin K(theta) to every site, then translates the upper
chirality component one site to the left and the lower one to the right:

    a_n(t+1) = (K psi_{n+1})_upper,    b_n(t+1) = (K psi_{n-1})_lower

At theta = pi/4 this is the Hadamard walk map.  Amplitudes are never
renormalized during coherent evolution, so any unitarity bug shows up as
norm drift.
"""

from __future__ import annotations

import logging
import math
import numpy as np
from numpy.typing import NDArray

from .const import DEFAULT_QUBIT, DEFAULT_THETA, DIST_NORM_TOL, QUBIT_NORM_TOL
from .exceptions import CapacityExceededError
from .models import CoinOperator, Moments, SiteDistribution, SpinorField, VarianceSeries

_LOGGER = logging.getLogger(__name__)


def coin_operator(theta: float = DEFAULT_THETA) -> CoinOperator:
    """Return K(theta) = sigma_z exp(i theta sigma_y).

    exp(i theta sigma_y) = [[cos, sin], [-sin, cos]], so
    K(theta) = [[cos, sin], [sin, -cos]]: sigma_z at 0, Hadamard at pi/4,
    sigma_x at pi/2.
    """
    if not math.isfinite(theta):
        raise ValueError(f"coin angle must be finite (got {theta})")
    c, s = math.cos(theta), math.sin(theta)
    matrix = np.array([[c, s], [s, -c]], dtype=np.complex128)
    matrix.setflags(write=False)
    return CoinOperator(theta=float(theta), matrix=matrix)


def check_qubit(qubit: tuple[complex, complex], tol: float = QUBIT_NORM_TOL) -> tuple[complex, complex]:
    """Return *qubit* as a pair of complex numbers; raise ValueError if not normalized."""
    a, b = complex(qubit[0]), complex(qubit[1])
    norm = abs(a) ** 2 + abs(b) ** 2
    if not math.isfinite(norm) or abs(norm - 1.0) > tol:
        raise ValueError(f"qubit must be normalized, |a|^2+|b|^2 = {norm!r}")
    return a, b


def new_state(
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
    position: int = 0,
    capacity: int = 1,
) -> SpinorField:
    """Return the state localized at *position* with chirality *qubit*.

    The window has 2*capacity + 3 cells centred on *position*, enough for
    *capacity* steps before the support reaches a sentinel cell.
    """
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1 (got {capacity})")
    a0, b0 = check_qubit(qubit)
    size = 2 * capacity + 3
    a = np.zeros(size, dtype=np.complex128)
    b = np.zeros(size, dtype=np.complex128)
    a[capacity + 1] = a0
    b[capacity + 1] = b0
    return SpinorField(a=a, b=b, origin=capacity + 1 - position, time=0, center=position)


def localized_like(state: SpinorField, qubit: tuple[complex, complex], position: int) -> SpinorField:
    """Return a state localized at *position* in the same window as *state*, keeping its time."""
    a0, b0 = check_qubit(qubit)
    idx = state.index(position)
    a = np.zeros(state.size, dtype=np.complex128)
    b = np.zeros(state.size, dtype=np.complex128)
    a[idx] = a0
    b[idx] = b0
    return SpinorField(a=a, b=b, origin=state.origin, time=state.time, center=position)


def apply_coin_shift(
    a: NDArray[np.complex128],
    b: NDArray[np.complex128],
    matrix: NDArray[np.complex128],
    broken: NDArray[np.bool_] | None = None,
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """One coin-and-translate update along the last axis of *a* and *b*.

    Leading axes are batch axes.  ``broken[..., j]`` flags the link between
    cells j and j+1; flux that would cross a broken link is reflected into the
    other chirality component of the same cell.  End cells receive nothing
    from outside the array.
    """
    up = matrix[0, 0] * a + matrix[0, 1] * b
    down = matrix[1, 0] * a + matrix[1, 1] * b
    new_a = np.zeros_like(a)
    new_b = np.zeros_like(b)
    if broken is None:
        new_a[..., :-1] = up[..., 1:]
        new_b[..., 1:] = down[..., :-1]
    else:
        new_a[..., :-1] = np.where(broken, down[..., :-1], up[..., 1:])
        new_b[..., 1:] = np.where(broken, up[..., 1:], down[..., :-1])
    return new_a, new_b


def check_room(state: SpinorField) -> None:
    """Raise CapacityExceededError if a step would write into a sentinel cell."""
    if state.a[1] != 0 or state.b[1] != 0 or state.a[-2] != 0 or state.b[-2] != 0:
        raise CapacityExceededError(
            f"support reaches the window edge at t={state.time} (capacity {state.capacity} steps)"
        )


def step(state: SpinorField, coin: CoinOperator | None = None) -> SpinorField:
    """Apply one coherent step: coin, then conditional translation."""
    check_room(state)
    matrix = coin_operator().matrix if coin is None else coin.matrix
    a, b = apply_coin_shift(state.a, state.b, matrix)
    return SpinorField(a=a, b=b, origin=state.origin, time=state.time + 1, center=state.center)


def density(a: NDArray[np.complex128], b: NDArray[np.complex128]) -> NDArray[np.float64]:
    """|a|^2 + |b|^2 elementwise, for amplitude arrays of any shape.

    Products and sums only: scalar and vectorized evaluation agree bit for bit.
    """
    return a.real * a.real + a.imag * a.imag + (b.real * b.real + b.imag * b.imag)


def probabilities(state: SpinorField) -> NDArray[np.float64]:
    """P_n = |a_n|^2 + |b_n|^2 for every storage cell."""
    return density(state.a, state.b)


def distribution(state: SpinorField) -> SiteDistribution:
    """Position distribution of *state* over its whole window."""
    return SiteDistribution(state.sites, probabilities(state))


def norm(state: SpinorField) -> float:
    """Total probability held by the state."""
    return float(probabilities(state).sum())


def inner_product(state: SpinorField, other: SpinorField) -> complex:
    """<state|other> for two states sharing the same window."""
    if state.size != other.size or state.origin != other.origin:
        raise ValueError("states live on different windows")
    return complex(np.vdot(state.a, other.a) + np.vdot(state.b, other.b))


def moments(dist: SiteDistribution, tol: float = DIST_NORM_TOL) -> Moments:
    """M1 = sum n P_n, M2 = sum n^2 P_n and the variance M2 - M1^2."""
    total = dist.total
    if abs(total - 1.0) > tol:
        raise ValueError(f"distribution must sum to 1 (got {total!r})")
    n = dist.sites.astype(np.float64)
    m1 = float(np.dot(n, dist.probabilities))
    m2 = float(np.dot(n * n, dist.probabilities))
    variance = float(np.dot((n - m1) ** 2, dist.probabilities))
    return Moments(m1=m1, m2=m2, variance=max(variance, 0.0))


def beta_terms(state: SpinorField) -> NDArray[np.float64]:
    """Coherence terms beta_n = Re(conj(a_n) b_n) per storage cell."""
    return np.real(np.conj(state.a) * state.b)


def evolve(
    state: SpinorField,
    coin: CoinOperator | None = None,
    steps: int = 1,
) -> tuple[SpinorField, list[Moments]]:
    """Apply *steps* coherent steps, returning the final state and the moments after each."""
    coin = coin_operator() if coin is None else coin
    records: list[Moments] = []
    for _ in range(steps):
        state = step(state, coin)
        records.append(moments(distribution(state)))
    return state, records


def coherent_variance(
    steps: int,
    theta: float = DEFAULT_THETA,
    qubit: tuple[complex, complex] = DEFAULT_QUBIT,
) -> VarianceSeries:
    """sigma^2(t), t = 0..steps, of the coherent walk from a localized state."""
    state = new_state(qubit, 0, capacity=steps)
    _, records = evolve(state, coin_operator(theta), steps)
    sigma2 = [0.0] + [m.variance for m in records]
    _LOGGER.debug("Coherent walk theta=%.6f: sigma2(%d)=%.6g", theta, steps, sigma2[-1])
    return VarianceSeries.from_values(np.arange(steps + 1), sigma2)
