"""Estimators on variance series and site distributions."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .classical import brownian_variance
from .const import (
    BROWNIAN_ANCHOR_FACTOR,
    BROWNIAN_GUESS_INCREMENT_DROP,
    BROWNIAN_GUESS_LINE_FRACTION,
    BROWNIAN_GUESS_MIN_SAMPLES,
    BROWNIAN_GUESS_TAIL_FRACTION,
    BROWNIAN_MAX_GAMMA_SPACING,
    BROWNIAN_SERIES_THRESHOLD,
    CONFIDENCE_LEVEL,
    CROSSOVER_MIN_TIME,
    CROSSOVER_SLOPE_THRESHOLD,
    CROSSOVER_WINDOW,
    DIFFUSION_FIT_MIN_SAMPLES,
    DIFFUSION_TAIL_FACTOR,
    GAUSS_NEWTON_MAX_ITER,
    GAUSS_NEWTON_MIN_DAMPING,
    GAUSS_NEWTON_STALL_STEP,
    GAUSS_NEWTON_STALL_TOL,
    GAUSS_NEWTON_STEP_TOL,
    QUADRATIC_FIT_MAX_REL_RESIDUAL,
    QUADRATIC_FIT_MIN_START,
)
from .exceptions import FitFailedError
from .models import (
    BrownianFit,
    BrownianParams,
    CrossoverEstimate,
    DiffusionFit,
    DiffusionLawFit,
    GaussianityReport,
    QuadraticFit,
    SiteDistribution,
    VarianceSeries,
)

_LOGGER = logging.getLogger(__name__)

_LOG_PARAM_LIMIT = 700.0  # exp overflows just above 709


def _clip_window(series: VarianceSeries, window: tuple[float, float]) -> tuple[float, float]:
    start, end = window
    if end > series.t_max:
        _LOGGER.warning("Fit window end %s beyond the data; clipped to t=%d", end, series.t_max)
        end = series.t_max
    return start, end


# ---------------------------------------------------------------------------
# sigma^2 = C t^2
# ---------------------------------------------------------------------------


def fit_quadratic_coefficient(series: VarianceSeries, window: tuple[float, float] | None = None) -> QuadraticFit:
    """Least-squares C in sigma^2 = C t^2 (through the origin) over *window*.

    The default window is [t_max/2, t_max].  A fit whose RMS residual exceeds
    5% of the RMS signal is flagged ``poor``.
    """
    window = (series.t_max / 2, series.t_max) if window is None else _clip_window(series, window)
    if window[0] < QUADRATIC_FIT_MIN_START:
        raise ValueError(f"quadratic fit window must start at t >= {QUADRATIC_FIT_MIN_START} (got {window[0]})")
    t, s2 = series.select(*window)
    if t.size == 0:
        raise ValueError(f"no samples in quadratic fit window {window}")
    t2 = t * t
    C = float(np.dot(t2, s2) / np.dot(t2, t2))
    resid = s2 - C * t2
    residual_norm = float(np.sqrt(np.dot(resid, resid)))
    signal = float(np.sqrt(np.mean(s2 * s2)))
    rms = float(np.sqrt(np.mean(resid * resid)))
    relative = rms / signal if signal > 0 else (0.0 if rms == 0 else math.inf)
    poor = relative > QUADRATIC_FIT_MAX_REL_RESIDUAL
    if poor:
        _LOGGER.warning("Quadratic fit over %s is poor: relative RMS residual %.3g", window, relative)
    return QuadraticFit(C=C, window=window, residual_norm=residual_norm, relative_residual=relative, poor=poor)


# ---------------------------------------------------------------------------
# D = slope / 2
# ---------------------------------------------------------------------------


def default_tail(series: VarianceSeries, timescale: float | None = None) -> tuple[float, float]:
    """[4 * timescale, t_max] (timescale = t_c or 1/gamma), or the second half of the series."""
    if timescale is None:
        return series.t_max / 2, float(series.t_max)
    return DIFFUSION_TAIL_FACTOR * timescale, float(series.t_max)


def fit_diffusion(series: VarianceSeries, tail: tuple[float, float] | None = None) -> DiffusionFit:
    """Half the least-squares slope of sigma^2(t) over *tail*, with a t-distribution interval."""
    tail = default_tail(series) if tail is None else _clip_window(series, tail)
    t, s2 = series.select(*tail)
    if t.size < DIFFUSION_FIT_MIN_SAMPLES:
        raise ValueError(f"diffusion fit needs >= {DIFFUSION_FIT_MIN_SAMPLES} samples in {tail} (got {t.size})")
    reg = stats.linregress(t, s2)
    half_width = stats.t.ppf(0.5 + CONFIDENCE_LEVEL / 2, t.size - 2) * reg.stderr / 2
    D = reg.slope / 2
    resid = s2 - (reg.intercept + reg.slope * t)
    return DiffusionFit(
        D=float(D),
        ci_low=float(D - half_width),
        ci_high=float(D + half_width),
        intercept=float(reg.intercept),
        window=tail,
        residual_norm=float(np.sqrt(np.dot(resid, resid))),
        samples=int(t.size),
    )


def regress_diffusion_law(ps: Sequence[float], ds: Sequence[float]) -> DiffusionLawFit:
    """Linear fit D = K (1-p)/p + b across link-breaking probabilities."""
    p = np.asarray(ps, dtype=np.float64)
    if p.size < 2 or np.any((p <= 0) | (p >= 1)):
        raise ValueError(f"need at least two p values in (0, 1) (got {list(ps)})")
    reg = stats.linregress((1 - p) / p, np.asarray(ds, dtype=np.float64))
    ci = None
    if p.size > 2:
        half_width = stats.t.ppf(0.5 + CONFIDENCE_LEVEL / 2, p.size - 2) * reg.stderr
        ci = (float(reg.slope - half_width), float(reg.slope + half_width))
    return DiffusionLawFit(
        K=float(reg.slope),
        intercept=float(reg.intercept),
        r_value=float(reg.rvalue),
        K_stderr=float(reg.stderr),
        K_ci=ci,
        samples=int(p.size),
    )


# ---------------------------------------------------------------------------
# Brownian curve
# ---------------------------------------------------------------------------


def _brownian_jacobian(t: NDArray[np.float64], C: float, gamma: float) -> NDArray[np.float64]:
    """Columns d sigma^2/dC and d sigma^2/dgamma of the Brownian curve."""
    x = gamma * t
    f = np.asarray(brownian_variance(BrownianParams(C, gamma), t))
    em = np.exp(-x)
    closed = 2 * C * (-t / gamma**2 - 2 * np.expm1(-x) / gamma**3 - t * em / gamma**2)
    series = C * t**3 * (-1 / 3 + x / 6 - x * x / 20)
    d_gamma = np.where(x < BROWNIAN_SERIES_THRESHOLD, series, closed)
    return np.column_stack([f / C, d_gamma])


def _ballistic_samples(t: NDArray[np.float64], s2: NDArray[np.float64], slope: float) -> int:
    """Number of leading samples in the ballistic stretch.

    The stretch ends at the first collapse in the growth rate of sigma^2 (a
    measured walk restarting its spread) when one occurs in the first half of
    the series, otherwise where sigma^2 first reaches a fraction of the tail
    line slope * t.
    """
    end = t.size
    rate = np.diff(s2) / np.diff(t)
    drops = np.flatnonzero((rate[:-1] > 0) & (rate[1:] < BROWNIAN_GUESS_INCREMENT_DROP * rate[:-1]))
    if drops.size and t[drops[0] + 1] <= t[-1] / 2:
        end = int(drops[0]) + 2
    elif slope > 0:
        reached = np.flatnonzero(s2 >= BROWNIAN_GUESS_LINE_FRACTION * slope * t)
        if reached.size:
            end = int(reached[0]) + 1
    return min(max(end, BROWNIAN_GUESS_MIN_SAMPLES), t.size)


def _initial_guess(t: NDArray[np.float64], s2: NDArray[np.float64], fixed_C: float | None) -> tuple[float, float]:
    """C from a quadratic fit over the ballistic stretch, gamma = 2C / (tail slope)."""
    late = t >= (1 - BROWNIAN_GUESS_TAIL_FRACTION) * t[-1]
    slope = float(stats.linregress(t[late], s2[late]).slope) if late.sum() >= 2 else 0.0
    if fixed_C is not None:
        C0 = fixed_C
    else:
        n = _ballistic_samples(t, s2, slope)
        C0 = float(np.dot(t[:n] ** 2, s2[:n]) / np.sum(t[:n] ** 4))
    gamma0 = 2 * C0 / slope if slope > 0 else 1 / t[-1]
    return C0, float(gamma0)


def _gauss_newton(
    t: NDArray[np.float64],
    s2: NDArray[np.float64],
    x0: NDArray[np.float64],
    fixed_C: float | None,
    log_gamma_max: float,
) -> tuple[NDArray[np.float64], float, int]:
    """Damped Gauss-Newton on [log gamma] or [log C, log gamma].

    Returns the final iterate, its cost and the iteration count.  A step that
    cannot be damped into a decrease ends the fit only when the linear model
    predicts no real progress either; otherwise the fit has stalled.
    """

    def unpack(v: NDArray[np.float64]) -> tuple[float, float]:
        if fixed_C is not None:
            return fixed_C, math.exp(v[0])
        return math.exp(v[0]), math.exp(v[1])

    def residuals(v: NDArray[np.float64]) -> NDArray[np.float64]:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(brownian_variance(BrownianParams(*unpack(v)), t)) - s2

    def diagnostics(v: NDArray[np.float64], iteration: int, cost: float) -> dict[str, float]:
        C, gamma = unpack(v)
        return {"C": C, "gamma": gamma, "iterations": iteration, "residual_norm": math.sqrt(cost)}

    x = np.asarray(x0, dtype=np.float64)
    r = residuals(x)
    cost = float(np.dot(r, r))
    for iteration in range(1, GAUSS_NEWTON_MAX_ITER + 1):
        C, gamma = unpack(x)
        jac = _brownian_jacobian(t, C, gamma) * np.array([C, gamma])
        if fixed_C is not None:
            jac = jac[:, 1:]
        delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        damping = 1.0
        accepted = False
        while damping >= GAUSS_NEWTON_MIN_DAMPING:
            trial = x + damping * delta
            if trial[-1] <= log_gamma_max and np.all(np.abs(trial) < _LOG_PARAM_LIMIT):
                r_trial = residuals(trial)
                cost_trial = float(np.dot(r_trial, r_trial))
                if cost_trial < cost:
                    accepted = True
                    break
            damping /= 2
        _LOGGER.debug("Gauss-Newton iter %d: x=%s cost=%.6g damping=%.3g", iteration, x, cost, damping)
        if not accepted:
            predicted = cost - float(np.sum((r + jac @ delta) ** 2))
            if predicted <= GAUSS_NEWTON_STALL_TOL * cost or np.linalg.norm(delta) <= GAUSS_NEWTON_STALL_STEP:
                break
            raise FitFailedError(
                f"brownian fit stalled: no step lowers the cost although {predicted:.3g} of {cost:.3g} is predicted",
                diagnostics(x, iteration, cost),
            )
        step_norm = float(np.linalg.norm(damping * delta))
        x, r, cost = trial, r_trial, cost_trial
        if step_norm <= GAUSS_NEWTON_STEP_TOL:
            break
    else:
        raise FitFailedError(
            f"brownian fit did not converge in {GAUSS_NEWTON_MAX_ITER} iterations",
            diagnostics(x, GAUSS_NEWTON_MAX_ITER, cost),
        )
    return x, cost, iteration


def _near(value: float, guess: float) -> bool:
    return guess / BROWNIAN_ANCHOR_FACTOR <= value <= guess * BROWNIAN_ANCHOR_FACTOR


def fit_brownian(
    series: VarianceSeries,
    fixed_C: float | None = None,
    window: tuple[float, float] | None = None,
) -> BrownianFit:
    """Fit sigma^2(t) = (2C/gamma)[t - (1 - e^{-gamma t})/gamma] by damped Gauss-Newton.

    Fits (C, gamma), or gamma alone when *fixed_C* is given, on log scale
    starting from C of the ballistic stretch and gamma = 2C / (tail slope).
    gamma is capped at one over the sample spacing.  Converges when the log
    step falls below 1e-10; raises FitFailedError when a step stalls with
    progress still predicted or after 200 iterations.

    A free fit that fails, or lands more than a factor 2 from the guess in
    either parameter, means the series does not pin C and gamma separately
    (a measured walk's staircase is the usual case).  C is then held at its
    ballistic estimate, gamma is refitted alone and the result is marked
    ``anchored``.
    """
    window = (1.0, float(series.t_max)) if window is None else _clip_window(series, window)
    t, s2 = series.select(max(window[0], 1.0), window[1])
    n_params = 1 if fixed_C is not None else 2
    if t.size <= n_params:
        raise ValueError(f"brownian fit needs more than {n_params} samples in {window} (got {t.size})")
    if fixed_C is not None and not fixed_C > 0:
        raise ValueError(f"fixed_C must be positive (got {fixed_C})")

    C0, gamma0 = _initial_guess(t, s2, fixed_C)
    if not C0 > 0:
        raise FitFailedError("initial C estimate is not positive", {"C": C0, "gamma": gamma0})
    log_gamma_max = math.log(BROWNIAN_MAX_GAMMA_SPACING / float(np.min(np.diff(t))))
    log_gamma0 = min(math.log(gamma0), log_gamma_max)

    anchored = False
    if fixed_C is not None:
        x, cost, iterations = _gauss_newton(t, s2, np.array([log_gamma0]), fixed_C, log_gamma_max)
        C = fixed_C
    else:
        try:
            x, cost, iterations = _gauss_newton(t, s2, np.array([math.log(C0), log_gamma0]), None, log_gamma_max)
            C, gamma = math.exp(x[0]), math.exp(x[1])
            reason = f"C={C:.4g} gamma={gamma:.4g} against the guess C={C0:.4g} gamma={gamma0:.4g}"
            anchored = not (_near(C, C0) and _near(gamma, gamma0))
        except FitFailedError as err:
            reason = str(err)
            anchored = True
        if anchored:
            _LOGGER.warning(
                "C and gamma are not separately identifiable (%s); holding C at the ballistic estimate %.6g",
                reason,
                C0,
            )
            x, cost, iterations = _gauss_newton(t, s2, np.array([log_gamma0]), C0, log_gamma_max)
            C = C0
    gamma = math.exp(x[-1])
    _LOGGER.info("Brownian fit: C=%.6g gamma=%.6g after %d iterations", C, gamma, iterations)
    return BrownianFit(
        params=BrownianParams(C=C, gamma=gamma),
        residual_norm=math.sqrt(cost),
        iterations=iterations,
        fixed_C=fixed_C is not None,
        window=window,
        anchored=anchored,
    )


# ---------------------------------------------------------------------------
# Shape diagnostics
# ---------------------------------------------------------------------------


def gaussianity(dist: SiteDistribution, samples: int | None = None) -> GaussianityReport:
    """Excess kurtosis and chi-square divergence from the moment-matched lattice Gaussian.

    When all weight sits on one parity sublattice (the walk's even/odd
    structure) the Gaussian is sampled on that sublattice with spacing 2.
    With *samples* given the divergence is scaled into a chi-square statistic
    and a p-value is reported.
    """
    probs = dist.probabilities / dist.total
    n = dist.sites.astype(np.float64)
    mean = float(np.dot(n, probs))
    var = float(np.dot((n - mean) ** 2, probs))
    if not var > 0:
        raise ValueError("gaussianity needs a distribution with positive variance")
    m4 = float(np.dot((n - mean) ** 4, probs))
    excess = m4 / (var * var) - 3

    parity = dist.sites % 2 == 0
    even_mass = float(probs[parity].sum())
    if min(even_mass, 1 - even_mass) < 1e-12:
        on = parity if even_mass > 0.5 else ~parity
    else:
        on = np.ones_like(parity)
    gauss = stats.norm.pdf(n[on], loc=mean, scale=math.sqrt(var))
    gauss = gauss / gauss.sum()
    observed = probs[on]
    used = gauss > 1e-300
    divergence = float(np.sum((observed[used] - gauss[used]) ** 2 / gauss[used]))
    dof = max(int(used.sum()) - 3, 1)
    p_value = None
    if samples is not None:
        p_value = float(stats.chi2.sf(samples * divergence, dof))
    return GaussianityReport(excess_kurtosis=excess, chi_square=divergence, degrees_of_freedom=dof, p_value=p_value)


def crossover_time(
    series: VarianceSeries,
    threshold: float = CROSSOVER_SLOPE_THRESHOLD,
    window: float = CROSSOVER_WINDOW,
    min_time: float = CROSSOVER_MIN_TIME,
) -> CrossoverEstimate | None:
    """First t >= min_time where the centred log-log slope of sigma^2 falls below *threshold*.

    The slope at t is measured between t(1-window) and t(1+window), with
    log sigma^2 interpolated linearly in log t.  None means the series never
    crosses (still ballistic, or too short).
    """
    mask = (series.times > 0) & (series.sigma2 > 0)
    log_t = np.log(series.times[mask].astype(np.float64))
    log_s = np.log(series.sigma2[mask])
    if log_t.size < 2:
        return None
    span = math.log1p(window) - math.log1p(-window)
    for t in series.times[mask]:
        if t < min_time:
            continue
        if t * (1 + window) > series.t_max:
            break
        hi = np.interp(math.log(t * (1 + window)), log_t, log_s)
        lo = np.interp(math.log(t * (1 - window)), log_t, log_s)
        slope = float((hi - lo) / span)
        if slope < threshold:
            return CrossoverEstimate(time=float(t), threshold=threshold, window=window, slope=slope)
    return None
