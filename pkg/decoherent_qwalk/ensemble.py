"""Ensemble orchestration: per-trajectory RNG streams, chunked execution and averaging."""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .classical import classical_evolve
from .const import (
    DEFAULT_THREADS,
    ENSEMBLE_CHUNK_SIZE,
    ENV_THREADS,
    KERNEL_MISMATCH_TOL,
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_COHERENT,
    MODEL_MEASURED,
    STATE_NORM_TOL,
)
from .links import coherence_time, is_confinement_dominated, simulate_links_batch
from .measurement import build_propagators, kernel_mismatch, simulate_measured_batch
from .models import (
    ClassicalDistribution,
    EnsembleResult,
    EnsembleSpec,
    SiteDistribution,
    TrajectoryBatch,
    VarianceSeries,
)
from .walk import coin_operator, distribution, evolve, new_state

_LOGGER = logging.getLogger(__name__)


class _RunLoggerAdapter(logging.LoggerAdapter):
    """Logger adapter that prepends [model/seed] to every message of one run."""

    def process(self, msg: str, kwargs: dict) -> tuple[str, dict]:  # type: ignore[override]
        spec: EnsembleSpec = self.extra["spec"]  # type: ignore[index, assignment]
        return f"[{spec.model}/{spec.master_seed}] {msg}", kwargs


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """Private generator of trajectory *index*; depends only on (master_seed, index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else $QWALK_THREADS, else 1."""
    if threads is None:
        raw = os.environ.get(ENV_THREADS)
        if raw is None:
            return DEFAULT_THREADS
        try:
            threads = int(raw)
        except ValueError as err:
            raise ValueError(f"{ENV_THREADS} must be an integer (got {raw!r})") from err
    if threads < 1:
        raise ValueError(f"thread count must be >= 1 (got {threads})")
    return threads


class _Totals:
    """Running sums over trajectories, merged chunk by chunk in index order."""

    def __init__(self, steps: int, snapshots: Sequence[int]) -> None:
        shape = steps + 1
        self.count = 0
        self.s1 = np.zeros(shape)
        self.s2 = np.zeros(shape)
        self.s11 = np.zeros(shape)
        self.s22 = np.zeros(shape)
        self.s12 = np.zeros(shape)
        self.var_sum = np.zeros(shape)
        self.snapshots = {t: np.zeros(2 * t + 1) for t in snapshots}
        self.max_norm_drift = 0.0

    def add(self, batch: TrajectoryBatch) -> None:
        m1, m2 = batch.m1, batch.m2
        self.count += batch.size
        self.s1 += m1.sum(axis=0)
        self.s2 += m2.sum(axis=0)
        self.s11 += (m1 * m1).sum(axis=0)
        self.s22 += (m2 * m2).sum(axis=0)
        self.s12 += (m1 * m2).sum(axis=0)
        self.var_sum += np.maximum(m2 - m1 * m1, 0.0).sum(axis=0)
        for t, acc in self.snapshots.items():
            acc += batch.snapshot_sums[t]
        self.max_norm_drift = max(self.max_norm_drift, batch.max_norm_drift)

    def series(self) -> VarianceSeries:
        """Variance of the averaged distribution with delta-method standard errors."""
        n = self.count
        mean1 = self.s1 / n
        mean2 = self.s2 / n
        sigma2 = np.maximum(mean2 - mean1 * mean1, 0.0)
        if n > 1:
            scale = n / (n - 1)
            var1 = np.maximum(self.s11 / n - mean1 * mean1, 0.0) * scale
            var2 = np.maximum(self.s22 / n - mean2 * mean2, 0.0) * scale
            cov = (self.s12 / n - mean1 * mean2) * scale
            err2 = (var2 + 4 * mean1 * mean1 * var1 - 4 * mean1 * cov) / n
            stderr = np.sqrt(np.maximum(err2, 0.0))
        else:
            stderr = np.zeros_like(sigma2)
        return VarianceSeries.from_values(
            np.arange(sigma2.shape[0]),
            sigma2,
            stderr,
            ensemble_size=n,
            mean_trajectory_sigma2=self.var_sum / n,
        )


def _chunks(trajectories: int) -> list[range]:
    return [range(lo, min(lo + ENSEMBLE_CHUNK_SIZE, trajectories)) for lo in range(0, trajectories, ENSEMBLE_CHUNK_SIZE)]


def _run_chunks(
    spec: EnsembleSpec,
    simulate: Callable[[list[np.random.Generator]], TrajectoryBatch],
    threads: int,
    log: logging.LoggerAdapter,
) -> _Totals:
    chunks = _chunks(spec.trajectories)

    def work(indices: range) -> TrajectoryBatch:
        return simulate([trajectory_stream(spec.master_seed, i) for i in indices])

    totals = _Totals(spec.steps, spec.snapshots)
    log.debug("%d trajectories in %d chunks on %d worker(s)", spec.trajectories, len(chunks), threads)
    if threads == 1:
        for batch in map(work, chunks):
            totals.add(batch)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # map yields in submission order, so the merge order is fixed
            for done, batch in enumerate(pool.map(work, chunks), start=1):
                totals.add(batch)
                log.debug("Merged chunk %d/%d", done, len(chunks))
    return totals


def _coherent(spec: EnsembleSpec) -> tuple[VarianceSeries, dict[int, SiteDistribution], dict[str, Any]]:
    coin = coin_operator(spec.theta)
    state = new_state(spec.qubit, 0, capacity=spec.steps)
    shots: dict[int, SiteDistribution] = {}
    sigma2 = [0.0]
    if 0 in spec.snapshots:
        shots[0] = _trim(distribution(state), 0)
    drift = 0.0
    for t in range(1, spec.steps + 1):
        state, records = evolve(state, coin, 1)
        sigma2.append(records[0].variance)
        if t in spec.snapshots:
            dist = distribution(state)
            drift = max(drift, abs(dist.total - 1.0))
            shots[t] = _trim(dist, t)
    drift = max(drift, abs(distribution(state).total - 1.0))
    series = VarianceSeries.from_values(np.arange(spec.steps + 1), sigma2)
    return series, shots, {"max_norm_drift": drift}


def _classical(spec: EnsembleSpec) -> tuple[VarianceSeries, dict[int, SiteDistribution], dict[str, Any]]:
    state = ClassicalDistribution.delta(float(spec.p))  # type: ignore[arg-type]
    shots: dict[int, SiteDistribution] = {}
    if 0 in spec.snapshots:
        shots[0] = state.distribution
    sigma2 = [0.0]
    for t in range(1, spec.steps + 1):
        state, part = classical_evolve(state, 1)
        sigma2.append(float(part.sigma2[-1]))
        if t in spec.snapshots:
            shots[t] = state.distribution
    return VarianceSeries.from_values(np.arange(spec.steps + 1), sigma2), shots, {}


def _trim(dist: SiteDistribution, t: int) -> SiteDistribution:
    """Restrict a window distribution to sites -t..t."""
    lo = -t - int(dist.sites[0])
    return SiteDistribution.from_array(-t, dist.probabilities[lo : lo + 2 * t + 1])


def _averaged(sums: dict[int, NDArray[np.float64]], n: int) -> dict[int, SiteDistribution]:
    return {t: SiteDistribution.from_array(-t, acc / n) for t, acc in sorted(sums.items())}


def ensemble_run(spec: EnsembleSpec, threads: int | None = None) -> EnsembleResult:
    """Run the ensemble described by *spec*.

    sigma^2(t) is the variance of the ensemble-averaged distribution; the
    average of per-trajectory variances is carried alongside.  Trajectory i
    draws only from its own stream, and chunk sums are merged in index order,
    so the result does not depend on *threads*.
    """
    workers = resolve_threads(threads)
    log = _RunLoggerAdapter(_LOGGER, {"spec": spec})
    log.info("Ensemble start: %s", spec.describe())
    metadata: dict[str, Any] = {"model": spec.model}

    if spec.model == MODEL_COHERENT:
        series, shots, extra = _coherent(spec)
        metadata.update(extra)
    elif spec.model == MODEL_CLASSICAL:
        series, shots, extra = _classical(spec)
        metadata.update(extra)
    elif spec.model == MODEL_MEASURED:
        coin = coin_operator(spec.theta)
        schedule = spec.schedule
        assert schedule is not None
        props = build_propagators(schedule, spec.steps, coin, spec.qubit)
        totals = _run_chunks(
            spec,
            lambda gens: simulate_measured_batch(schedule, spec.steps, props, gens, spec.snapshots),
            workers,
            log,
        )
        series = totals.series()
        shots = _averaged(totals.snapshots, totals.count)
        metadata["max_norm_drift"] = totals.max_norm_drift
        metadata["mean_interval"] = schedule.mean_interval
        mismatch = kernel_mismatch(min(schedule.max_interval, spec.steps), coin)
        if mismatch > KERNEL_MISMATCH_TOL:
            log.warning("Collapse-sign kernels differ by %.3g; the master equation is approximate", mismatch)
        metadata["kernel_mismatch"] = mismatch
    elif spec.model == MODEL_BROKEN_LINKS:
        p = float(spec.p)  # type: ignore[arg-type]
        coin = coin_operator(spec.theta)
        if is_confinement_dominated(p):
            log.warning("p=%.3g > 1/2: spreading is confinement-dominated, diffusion fits are unreliable", p)
        totals = _run_chunks(
            spec,
            lambda gens: simulate_links_batch(p, spec.steps, coin, gens, spec.qubit, spec.snapshots),
            workers,
            log,
        )
        series = totals.series()
        shots = _averaged(totals.snapshots, totals.count)
        metadata["max_norm_drift"] = totals.max_norm_drift
        metadata["confinement_dominated"] = is_confinement_dominated(p)
        metadata["coherence_time"] = coherence_time(p)
    else:
        raise ValueError(f"unknown model {spec.model!r}")

    drift = metadata.get("max_norm_drift", 0.0)
    if drift > STATE_NORM_TOL:
        log.warning("Norm drift %.3g exceeds %.0e", drift, STATE_NORM_TOL)
    log.info(
        "Ensemble done: %d trajectories, sigma2(%d)=%.6g +- %.3g",
        series.ensemble_size,
        spec.steps,
        series.sigma2[-1],
        series.standard_errors[-1],
    )
    return EnsembleResult(spec=spec, series=series, snapshots=shots, metadata=metadata)
