"""Data models for the decoherent quantum walk simulator."""

from __future__ import annotations

import math
import pathlib
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .const import (
    DEFAULT_OUTPUT_FORMAT,
    DEFAULT_QUBIT,
    DEFAULT_SEED,
    DEFAULT_STEPS,
    DEFAULT_THETA,
    DEFAULT_THREADS,
    DEFAULT_TRAJECTORIES,
    MODEL_BROKEN_LINKS,
    MODEL_CLASSICAL,
    MODEL_MEASURED,
    MODELS,
    SCHEDULE_EXPLICIT,
    SCHEDULE_PERIODIC,
    SCHEDULE_UNIFORM,
)


def _frozen_array(values: Any, dtype: Any) -> NDArray[Any]:
    """Return a read-only copy of *values* as an ndarray of *dtype*."""
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# walk core
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoinOperator:
    """Coin K(theta) = sigma_z exp(i theta sigma_y) as an explicit 2x2 matrix."""

    theta: float
    matrix: NDArray[np.complex128]


@dataclass(frozen=True, eq=False)
class SpinorField:
    """Walker wavefunction (a_n, b_n) on a bounded lattice window.

    Attributes:
        a, b:    Upper (left-moving) and lower (right-moving) chirality
                 amplitudes, one entry per storage cell.  The first and last
                 cells are sentinels and must stay exactly zero.
        origin:  Storage index of lattice site n = 0.
        time:    Steps taken since the state was created.
        center:  Site of the most recent reset or collapse; the support lies
                 within ``center ± (time - collapse_time)``.
    """

    a: NDArray[np.complex128]
    b: NDArray[np.complex128]
    origin: int
    time: int = 0
    center: int = 0

    def __post_init__(self) -> None:
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError(f"amplitude arrays must be 1-D and equal length (got {self.a.shape}, {self.b.shape})")
        for arr in (self.a, self.b):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        """Number of storage cells, sentinels included."""
        return int(self.a.shape[0])

    @property
    def capacity(self) -> int:
        """Number of steps a state localized at the window centre can take."""
        return (self.size - 3) // 2

    @property
    def sites(self) -> NDArray[np.int64]:
        return np.arange(self.size, dtype=np.int64) - self.origin

    def index(self, site: int) -> int:
        """Storage index of *site*; raises IndexError outside the window."""
        idx = site + self.origin
        if not 0 <= idx < self.size:
            raise IndexError(f"site {site} outside window [{-self.origin}, {self.size - 1 - self.origin}]")
        return idx

    def qubit_at(self, site: int) -> tuple[complex, complex]:
        idx = self.index(site)
        return complex(self.a[idx]), complex(self.b[idx])


@dataclass(frozen=True, eq=False)
class SiteDistribution:
    """Probabilities P_n on a contiguous, ascending range of sites."""

    sites: NDArray[np.int64]
    probabilities: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.sites.shape != self.probabilities.shape:
            raise ValueError(f"sites and probabilities differ in shape ({self.sites.shape} vs {self.probabilities.shape})")
        self.sites.setflags(write=False)
        self.probabilities.setflags(write=False)

    @classmethod
    def from_array(cls, first_site: int, probabilities: Any) -> SiteDistribution:
        probs = np.array(probabilities, dtype=np.float64)
        return cls(np.arange(first_site, first_site + probs.shape[0], dtype=np.int64), probs)

    @classmethod
    def from_mapping(cls, values: dict[int, float]) -> SiteDistribution:
        """Build a distribution from ``{site: P}``; missing sites in between are zero."""
        lo, hi = min(values), max(values)
        probs = np.zeros(hi - lo + 1)
        for site, prob in values.items():
            probs[site - lo] = prob
        return cls.from_array(lo, probs)

    @classmethod
    def delta(cls, site: int = 0) -> SiteDistribution:
        return cls.from_array(site, [1.0])

    def at(self, site: int) -> float:
        idx = site - int(self.sites[0]) if self.sites.size else -1
        if 0 <= idx < self.sites.size:
            return float(self.probabilities[idx])
        return 0.0

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())


@dataclass(frozen=True)
class Moments:
    """First and second moments of a site distribution and its variance."""

    m1: float
    m2: float
    variance: float


# ---------------------------------------------------------------------------
# measurement decoherence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementSchedule:
    """Rule generating the intervals between joint position/chirality measurements.

    Exactly one family is used, selected by ``kind``:

    * ``periodic``:        every ``period`` steps.
    * ``uniform_random``:  intervals drawn uniformly from the integers
                           ``[low, high]``, one uniform draw per interval.
    * ``explicit``:        the given ``intervals`` in order, repeated cyclically.
    """

    kind: str
    period: int | None = None
    low: int | None = None
    high: int | None = None
    intervals: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == SCHEDULE_PERIODIC:
            if self.period is None or self.period < 1:
                raise ValueError(f"periodic schedule needs period >= 1 (got {self.period})")
        elif self.kind == SCHEDULE_UNIFORM:
            if self.low is None or self.high is None or not 1 <= self.low <= self.high:
                raise ValueError(f"uniform schedule needs 1 <= a <= b (got a={self.low}, b={self.high})")
        elif self.kind == SCHEDULE_EXPLICIT:
            if not self.intervals or any(k < 1 for k in self.intervals):
                raise ValueError(f"explicit schedule needs intervals >= 1 (got {self.intervals})")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def periodic(cls, period: int) -> MeasurementSchedule:
        return cls(kind=SCHEDULE_PERIODIC, period=int(period))

    @classmethod
    def uniform_random(cls, low: int, high: int) -> MeasurementSchedule:
        return cls(kind=SCHEDULE_UNIFORM, low=int(low), high=int(high))

    @classmethod
    def explicit(cls, intervals: list[int] | tuple[int, ...]) -> MeasurementSchedule:
        return cls(kind=SCHEDULE_EXPLICIT, intervals=tuple(int(k) for k in intervals))

    @property
    def needs_draw(self) -> bool:
        """True if every interval consumes one uniform from the trajectory stream."""
        return self.kind == SCHEDULE_UNIFORM

    @property
    def max_interval(self) -> int:
        if self.kind == SCHEDULE_PERIODIC:
            return int(self.period)  # type: ignore[arg-type]
        if self.kind == SCHEDULE_UNIFORM:
            return int(self.high)  # type: ignore[arg-type]
        return max(self.intervals)

    def support(self) -> list[tuple[int, float]]:
        """Interval values with their probabilities (long-run frequencies for explicit)."""
        if self.kind == SCHEDULE_PERIODIC:
            return [(int(self.period), 1.0)]  # type: ignore[arg-type]
        if self.kind == SCHEDULE_UNIFORM:
            n = self.high - self.low + 1  # type: ignore[operator]
            return [(k, 1.0 / n) for k in range(self.low, self.high + 1)]  # type: ignore[arg-type, operator]
        weight = 1.0 / len(self.intervals)
        counts: dict[int, float] = {}
        for k in self.intervals:
            counts[k] = counts.get(k, 0.0) + weight
        return sorted(counts.items())

    @property
    def mean_interval(self) -> float:
        """T-bar, exact for every kind."""
        if self.kind == SCHEDULE_PERIODIC:
            return float(self.period)  # type: ignore[arg-type]
        if self.kind == SCHEDULE_UNIFORM:
            return (self.low + self.high) / 2  # type: ignore[operator]
        return sum(self.intervals) / len(self.intervals)

    @property
    def mean_square_interval(self) -> float:
        """Average of the squared intervals, exact for every kind."""
        if self.kind == SCHEDULE_PERIODIC:
            return float(self.period**2)  # type: ignore[operator]
        if self.kind == SCHEDULE_UNIFORM:
            a, b = self.low, self.high
            n = b - a + 1  # type: ignore[operator]
            return sum(k * k for k in range(a, b + 1)) / n  # type: ignore[arg-type, operator]
        return sum(k * k for k in self.intervals) / len(self.intervals)

    def interval(self, count: int, u: float | None = None) -> int:
        """Length of interval number *count* (0-based); *u* is required for random kinds."""
        if self.kind == SCHEDULE_PERIODIC:
            return int(self.period)  # type: ignore[arg-type]
        if self.kind == SCHEDULE_UNIFORM:
            if u is None:
                raise ValueError("uniform_random schedule needs a uniform draw")
            span = self.high - self.low + 1  # type: ignore[operator]
            return min(self.low + int(u * span), self.high)  # type: ignore[operator, type-var]
        return self.intervals[count % len(self.intervals)]

    def describe(self) -> dict[str, Any]:
        if self.kind == SCHEDULE_PERIODIC:
            return {"kind": self.kind, "period": self.period}
        if self.kind == SCHEDULE_UNIFORM:
            return {"kind": self.kind, "low": self.low, "high": self.high}
        return {"kind": self.kind, "intervals": list(self.intervals)}


@dataclass(frozen=True, eq=False)
class KernelQ:
    """Single-period kernel q_n = P_n(T) on offsets -T..T and its moments."""

    period: int
    q: NDArray[np.float64]
    m1q: float
    m2q: float
    sigma_q2: float

    @property
    def offsets(self) -> NDArray[np.int64]:
        return np.arange(-self.period, self.period + 1, dtype=np.int64)

    def at(self, offset: int) -> float:
        if -self.period <= offset <= self.period:
            return float(self.q[offset + self.period])
        return 0.0


@dataclass(frozen=True)
class CollapseOutcome:
    """Result of a joint position / sigma_y chirality measurement."""

    site: int
    chirality_sign: int
    post_state: SpinorField


@dataclass(frozen=True, eq=False)
class MeasuredTrajectory:
    """Record of one trajectory under repeated measurements.

    ``m1`` and ``m2`` hold the moments of the trajectory's own position
    distribution at t = 0..steps (after any collapse at that time).
    """

    m1: NDArray[np.float64]
    m2: NDArray[np.float64]
    measurement_times: tuple[int, ...]
    measured_sites: tuple[int, ...]
    chirality_signs: tuple[int, ...]
    final_state: SpinorField

    @property
    def variance(self) -> NDArray[np.float64]:
        return np.maximum(self.m2 - self.m1**2, 0.0)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Per-trajectory moments for one chunk of an ensemble.

    ``m1`` and ``m2`` have shape (trajectories, steps + 1).  ``snapshot_sums``
    maps a snapshot time t to the summed P_n(t) over sites -t..t.
    """

    m1: NDArray[np.float64]
    m2: NDArray[np.float64]
    snapshot_sums: dict[int, NDArray[np.float64]] = field(default_factory=dict)
    max_norm_drift: float = 0.0

    @property
    def size(self) -> int:
        return int(self.m1.shape[0])


# ---------------------------------------------------------------------------
# broken links
# ---------------------------------------------------------------------------


class SiteCase(StrEnum):
    """Local topology of a site given its two adjacent links."""

    INTACT = "intact"
    LEFT_BROKEN = "left_broken"
    RIGHT_BROKEN = "right_broken"
    ISOLATED = "isolated"


@dataclass(frozen=True, eq=False)
class LinkConfig:
    """Broken/intact flag per link at one time step.

    Link ``i`` connects sites ``first_site + i`` and ``first_site + i + 1``.
    Links outside the sampled range are intact.
    """

    broken: NDArray[np.bool_]
    first_site: int
    p: float

    def __post_init__(self) -> None:
        self.broken.setflags(write=False)

    @classmethod
    def from_flags(cls, first_site: int, flags: Any, p: float = 0.0) -> LinkConfig:
        return cls(np.array(flags, dtype=bool), int(first_site), float(p))

    @property
    def last_site(self) -> int:
        """Right end of the last sampled link."""
        return self.first_site + int(self.broken.shape[0])

    def is_broken(self, left_site: int) -> bool:
        """True if the link between *left_site* and ``left_site + 1`` is broken."""
        idx = left_site - self.first_site
        if 0 <= idx < self.broken.shape[0]:
            return bool(self.broken[idx])
        return False


@dataclass(frozen=True, eq=False)
class BrokenLinkRecord:
    """Record of one broken-link trajectory."""

    p: float
    m1: NDArray[np.float64]
    m2: NDArray[np.float64]
    max_norm_drift: float
    final_state: SpinorField
    snapshots: dict[int, SiteDistribution] = field(default_factory=dict)

    @property
    def variance(self) -> NDArray[np.float64]:
        return np.maximum(self.m2 - self.m1**2, 0.0)


# ---------------------------------------------------------------------------
# classical models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BrownianParams:
    """Parameters (C, gamma) of the Brownian variance curve."""

    C: float
    gamma: float

    def __post_init__(self) -> None:
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ValueError(f"C must be positive (got {self.C})")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive (got {self.gamma})")


@dataclass(frozen=True, eq=False)
class ClassicalDistribution:
    """Site distribution evolved by the statistically weighted master equation."""

    distribution: SiteDistribution
    p: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"stay probability p must be in [0, 1] (got {self.p})")

    @classmethod
    def delta(cls, p: float, site: int = 0) -> ClassicalDistribution:
        return cls(SiteDistribution.delta(site), p)


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceSeries:
    """Time-indexed position variance with its standard errors.

    ``sigma2`` is the variance of the ensemble-averaged distribution;
    ``mean_trajectory_sigma2`` is the average of per-trajectory variances.
    """

    times: NDArray[np.int64]
    sigma2: NDArray[np.float64]
    standard_errors: NDArray[np.float64]
    ensemble_size: int = 1
    mean_trajectory_sigma2: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        n = self.times.shape[0]
        if self.sigma2.shape[0] != n or self.standard_errors.shape[0] != n:
            raise ValueError(
                f"series arrays differ in length (times={n}, sigma2={self.sigma2.shape[0]}, "
                f"stderr={self.standard_errors.shape[0]})"
            )
        if self.mean_trajectory_sigma2 is not None and self.mean_trajectory_sigma2.shape[0] != n:
            raise ValueError("mean_trajectory_sigma2 differs in length from times")
        if np.any(self.sigma2 < 0):
            raise ValueError("sigma2 must be non-negative")

    @classmethod
    def from_values(
        cls,
        times: Any,
        sigma2: Any,
        standard_errors: Any = None,
        ensemble_size: int = 1,
        mean_trajectory_sigma2: Any = None,
    ) -> VarianceSeries:
        t = _frozen_array(times, np.int64)
        s = _frozen_array(sigma2, np.float64)
        err = _frozen_array(np.zeros_like(s) if standard_errors is None else standard_errors, np.float64)
        mts = None if mean_trajectory_sigma2 is None else _frozen_array(mean_trajectory_sigma2, np.float64)
        return cls(t, s, err, int(ensemble_size), mts)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def t_max(self) -> int:
        return int(self.times[-1])

    def select(self, start: float, end: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return (t, sigma2) for start <= t <= end as float arrays."""
        mask = (self.times >= start) & (self.times <= end)
        return self.times[mask].astype(np.float64), self.sigma2[mask]


@dataclass(frozen=True)
class EnsembleSpec:
    """Everything that determines an ensemble run; identical specs give identical output."""

    model: str
    steps: int
    trajectories: int = 1
    master_seed: int = 0
    theta: float = DEFAULT_THETA
    qubit: tuple[complex, complex] = DEFAULT_QUBIT
    schedule: MeasurementSchedule | None = None
    p: float | None = None
    snapshots: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1 (got {self.steps})")
        if self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1 (got {self.trajectories})")
        if self.model == MODEL_MEASURED and self.schedule is None:
            raise ValueError("measured model needs a measurement schedule")
        if self.model in (MODEL_BROKEN_LINKS, MODEL_CLASSICAL):
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError(f"{self.model} model needs p in [0, 1] (got {self.p})")
        for t in self.snapshots:
            if not 0 <= t <= self.steps:
                raise ValueError(f"snapshot time {t} outside [0, {self.steps}]")

    def describe(self) -> dict[str, Any]:
        info: dict[str, Any] = {
            "model": self.model,
            "steps": self.steps,
            "trajectories": self.trajectories,
            "master_seed": self.master_seed,
            "theta": self.theta,
            "qubit": [[z.real, z.imag] for z in map(complex, self.qubit)],
        }
        if self.schedule is not None:
            info["schedule"] = self.schedule.describe()
        if self.p is not None:
            info["p"] = self.p
        if self.snapshots:
            info["snapshots"] = list(self.snapshots)
        return info


@dataclass(frozen=True)
class EnsembleResult:
    """Averaged output of an ensemble run."""

    spec: EnsembleSpec
    series: VarianceSeries
    snapshots: dict[int, SiteDistribution] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class QuadraticFit:
    """sigma^2 = C t^2 through the origin over ``window``."""

    C: float
    window: tuple[float, float]
    residual_norm: float
    relative_residual: float
    poor: bool


@dataclass(frozen=True)
class DiffusionFit:
    """Half the least-squares slope of sigma^2(t) over the tail window."""

    D: float
    ci_low: float
    ci_high: float
    intercept: float
    window: tuple[float, float]
    residual_norm: float
    samples: int


@dataclass(frozen=True)
class BrownianFit:
    params: BrownianParams
    residual_norm: float
    iterations: int
    fixed_C: bool
    window: tuple[float, float]
    anchored: bool = False  # C held at its ballistic estimate


@dataclass(frozen=True)
class GaussianityReport:
    excess_kurtosis: float
    chi_square: float
    degrees_of_freedom: int
    p_value: float | None = None


@dataclass(frozen=True)
class CrossoverEstimate:
    """First time the centred log-log slope of sigma^2 drops below ``threshold``."""

    time: float
    threshold: float
    window: float
    slope: float


@dataclass(frozen=True)
class DiffusionLawFit:
    """D = K (1-p)/p + intercept regression over several p values."""

    K: float
    intercept: float
    r_value: float
    K_stderr: float
    K_ci: tuple[float, float] | None = None
    samples: int = 0


# ---------------------------------------------------------------------------
# experiments / result files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment configuration (see config.parse_config).

    ``steps`` and ``trajectories`` stay None on a preset configuration that
    does not override them; the preset supplies its own values.
    """

    model: str | None = None
    steps: int | None = None
    trajectories: int | None = None
    seed: int = DEFAULT_SEED
    theta: float = DEFAULT_THETA
    qubit: tuple[complex, complex] = DEFAULT_QUBIT
    period: int | None = None
    interval_uniform: tuple[int, int] | None = None
    intervals: tuple[int, ...] | None = None
    p: float | None = None
    output_path: str | None = None
    output_format: str = DEFAULT_OUTPUT_FORMAT
    preset: str | None = None
    threads: int = DEFAULT_THREADS
    snapshots: tuple[int, ...] = ()

    @property
    def schedule(self) -> MeasurementSchedule | None:
        if self.period is not None:
            return MeasurementSchedule.periodic(self.period)
        if self.interval_uniform is not None:
            return MeasurementSchedule.uniform_random(*self.interval_uniform)
        if self.intervals is not None:
            return MeasurementSchedule.explicit(self.intervals)
        return None

    def ensemble_spec(self) -> EnsembleSpec:
        if self.model is None:
            raise ValueError("configuration has no model (preset configs expand first)")
        return EnsembleSpec(
            model=self.model,
            steps=DEFAULT_STEPS if self.steps is None else self.steps,
            trajectories=DEFAULT_TRAJECTORIES if self.trajectories is None else self.trajectories,
            master_seed=self.seed,
            theta=self.theta,
            qubit=self.qubit,
            schedule=self.schedule,
            p=self.p,
            snapshots=self.snapshots,
        )


@dataclass(frozen=True)
class ResultSection:
    """One series of records: variance, distribution or fit summary."""

    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]
    label: str = ""
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ResultFile:
    """Self-describing result file: metadata header plus one or more sections."""

    metadata: dict[str, Any]
    sections: tuple[ResultSection, ...]

    def section(self, kind: str, label: str | None = None) -> ResultSection:
        for sec in self.sections:
            if sec.kind == kind and (label is None or sec.label == label):
                return sec
        raise KeyError(f"no {kind!r} section{'' if label is None else f' labelled {label!r}'}")


@dataclass
class ExperimentReport:
    """Outcome of run_experiment: per-run ensembles, the result file and what was written."""

    results: dict[str, EnsembleResult]
    result_file: ResultFile
    files: list[pathlib.Path] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
