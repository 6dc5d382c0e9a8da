"""Classical baselines and closed forms.

The classical master equation is the broken-link site update averaged over
the four site cases with the coherence terms beta_n dropped.  The Brownian
curve sigma^2(t) = (2C/gamma)[t - (1 - exp(-gamma t))/gamma] bridges the
quadratic (t << 1/gamma) and linear (t >> 1/gamma) regimes.
"""

from __future__ import annotations

import logging
import math
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import optimize

from .const import BROWNIAN_SERIES_THRESHOLD, COHERENT_C, CROSSOVER_SLOPE_THRESHOLD, GAMMA_P_COEFF
from .exceptions import OutOfDomainError
from .models import BrownianParams, ClassicalDistribution, SiteCase, SiteDistribution, VarianceSeries
from .walk import moments

_LOGGER = logging.getLogger(__name__)


def classical_step(state: ClassicalDistribution) -> ClassicalDistribution:
    """P'(n) = p P(n) + (1-p)/2 [P(n+1) + P(n-1)]; the support grows by one site each side."""
    p = state.p
    probs = state.distribution.probabilities
    out = np.zeros(probs.shape[0] + 2)
    out[1:-1] += p * probs
    hop = 0.5 * (1 - p) * probs
    out[:-2] += hop
    out[2:] += hop
    first = int(state.distribution.sites[0]) - 1
    return ClassicalDistribution(SiteDistribution.from_array(first, out), p)


def classical_evolve(state: ClassicalDistribution, steps: int) -> tuple[ClassicalDistribution, VarianceSeries]:
    """Apply classical_step *steps* times; returns the final state and sigma^2(t) for t = 0..steps."""
    sigma2 = [moments(state.distribution).variance]
    for _ in range(steps):
        state = classical_step(state)
        sigma2.append(moments(state.distribution).variance)
    return state, VarianceSeries.from_values(np.arange(steps + 1), sigma2)


def weighted_case_update(
    probs: NDArray[np.float64],
    beta: NDArray[np.float64],
    p: float,
) -> NDArray[np.float64]:
    """Expected P_n(t+1) over random link configurations, given P_n(t) and beta_n(t).

    Combines the four per-case site updates with weights (1-p)^2, p(1-p),
    p(1-p) and p^2.  Arrays cover the same contiguous sites and are padded
    with one zero on each side in the result.  With beta = 0 this is
    classical_step.
    """
    pad_p = np.pad(np.asarray(probs, dtype=np.float64), 2)
    pad_b = np.pad(np.asarray(beta, dtype=np.float64), 2)
    here = slice(1, -1)
    left = slice(0, -2)
    right = slice(2, None)
    updates = {
        SiteCase.INTACT: 0.5 * (pad_p[right] + pad_p[left]) + pad_b[right] - pad_b[left],
        SiteCase.RIGHT_BROKEN: 0.5 * (pad_p[left] + pad_p[here]) - (pad_b[left] + pad_b[here]),
        SiteCase.LEFT_BROKEN: 0.5 * (pad_p[here] + pad_p[right]) + (pad_b[here] + pad_b[right]),
        SiteCase.ISOLATED: pad_p[here],
    }
    weights = {
        SiteCase.INTACT: (1 - p) ** 2,
        SiteCase.LEFT_BROKEN: p * (1 - p),
        SiteCase.RIGHT_BROKEN: p * (1 - p),
        SiteCase.ISOLATED: p * p,
    }
    return sum((weights[case] * updates[case] for case in SiteCase), np.zeros(pad_p.shape[0] - 2))


def d_cl(p: float) -> float:
    """Classical diffusion coefficient (1-p)/2."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1] (got {p})")
    return (1 - p) / 2


def brownian_variance(params: BrownianParams, t: Any) -> float | NDArray[np.float64]:
    """(2C/gamma) [t - (1 - exp(-gamma t))/gamma], scalar or array.

    For gamma t < 1e-4 the bracket cancels badly; the series
    C t^2 (1 - x/3 + x^2/12 - x^3/60), x = gamma t, is used instead.
    """
    C, gamma = params.C, params.gamma
    tt = np.asarray(t, dtype=np.float64)
    if np.any(tt < 0):
        raise ValueError(f"t must be >= 0 (got {t})")
    x = gamma * tt
    small = x < BROWNIAN_SERIES_THRESHOLD
    closed = (2 * C / gamma) * (tt + np.expm1(-x) / gamma)
    series = C * tt * tt * (1 - x / 3 + x * x / 12 - x**3 / 60)
    out = np.where(small, series, closed)
    return float(out) if out.ndim == 0 else out


def brownian_diffusion(params: BrownianParams) -> float:
    """Long-time diffusion coefficient D = C / gamma."""
    return params.C / params.gamma


def brownian_slope(params: BrownianParams) -> float:
    """Asymptotic d sigma^2 / dt = 2C / gamma."""
    return 2 * params.C / params.gamma


def gamma_from_period(period: float) -> float:
    """gamma = 2/T for periodic measurements."""
    if period < 1:
        raise ValueError(f"period must be >= 1 (got {period})")
    return 2 / period


def gamma_from_p(p: float) -> float:
    """gamma = 0.73 p / (1-p) for broken links."""
    if not 0.0 < p < 1.0:
        raise OutOfDomainError(f"gamma_from_p needs 0 < p < 1 (got {p})")
    return GAMMA_P_COEFF * p / (1 - p)


def brownian_params_for_links(p: float, C: float = COHERENT_C) -> BrownianParams:
    return BrownianParams(C=C, gamma=gamma_from_p(p))


def brownian_params_for_period(period: float, C: float = COHERENT_C) -> BrownianParams:
    return BrownianParams(C=C, gamma=gamma_from_period(period))


def brownian_crossover_time(params: BrownianParams, threshold: float = CROSSOVER_SLOPE_THRESHOLD) -> float:
    """Time where the log-log slope of brownian_variance equals *threshold*.

    The slope t sigma^2'(t) / sigma^2(t) depends on x = gamma t only and falls
    monotonically from 2 to 1, so there is exactly one root in x.
    """
    if not 1.0 < threshold < 2.0:
        raise ValueError(f"threshold must lie strictly between 1 and 2 (got {threshold})")

    def excess(x: float) -> float:
        return x * (-math.expm1(-x)) / (x + math.expm1(-x)) - threshold

    x = optimize.brentq(excess, 1e-5, 1e6, xtol=1e-12)
    _LOGGER.debug("Brownian crossover for %s at gamma*t=%.6g", params, x)
    return float(x) / params.gamma
