"""Command-line interface.

  qwalk run {coherent,measure,links,classical} [flags]
  qwalk preset {fig2,fig4,fig5,fig6,fig7,intervals,diffusion_law} [flags]
  qwalk fit {diffusion,brownian,quadratic} RESULT.csv [--window A B] [--fixed-c C]

Exit status: 0 on success, 2 for invalid input or a failed fit, 1 for I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import logging.handlers
import pathlib
import sys
from collections.abc import Sequence
from typing import Any

from . import __version__
from .config import parse_config
from .const import (
    CONF_INTERVAL_UNIFORM,
    CONF_INTERVALS,
    CONF_MODEL,
    CONF_OUTPUT_FORMAT,
    CONF_OUTPUT_PATH,
    CONF_P,
    CONF_PERIOD,
    CONF_PRESET,
    CONF_SEED,
    CONF_SNAPSHOTS,
    CONF_STEPS,
    CONF_THETA,
    CONF_THREADS,
    CONF_TRAJECTORIES,
    CROSSOVER_SLOPE_THRESHOLD,
    DOMAIN,
    LOG_BACKUP_COUNT,
    LOG_DATEFMT,
    LOG_FORMAT,
    LOG_MAX_BYTES,
    MODEL_ALIASES,
    MODEL_BROKEN_LINKS,
    MODEL_MEASURED,
    OUTPUT_FORMATS,
    PRESET_NAMES,
    RECORD_VARIANCE,
)
from .exceptions import ConfigError, QuantumWalkError
from .links import coherence_time
from .models import ResultFile, ResultSection, VarianceSeries
from .results import FitRow, fit_section, read_result, series_from_section, write_result
from .runner import run_experiment
from .statistics import default_tail, fit_brownian, fit_diffusion, fit_quadratic_coefficient

_LOGGER = logging.getLogger(__name__)

FIT_DIFFUSION = "diffusion"
FIT_BROWNIAN = "brownian"
FIT_QUADRATIC = "quadratic"

# argparse destination -> configuration key
_FLAG_KEYS = {
    "steps": CONF_STEPS,
    "trajectories": CONF_TRAJECTORIES,
    "seed": CONF_SEED,
    "theta": CONF_THETA,
    "period": CONF_PERIOD,
    "interval_uniform": CONF_INTERVAL_UNIFORM,
    "intervals": CONF_INTERVALS,
    "p": CONF_P,
    "out": CONF_OUTPUT_PATH,
    "format": CONF_OUTPUT_FORMAT,
    "threads": CONF_THREADS,
    "snapshots": CONF_SNAPSHOTS,
}


# ---------------------------------------------------------------------------
# Logging
# ---------------------------------------------------------------------------


def _build_file_handler(log_path: pathlib.Path) -> logging.handlers.RotatingFileHandler:
    handler = logging.handlers.RotatingFileHandler(
        log_path,
        maxBytes=LOG_MAX_BYTES,
        backupCount=LOG_BACKUP_COUNT,  # keep <name>.log + .1 + .2
        encoding="utf-8",
    )
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=LOG_DATEFMT))
    return handler


def _configure_logging(verbosity: int, log_file: str | None) -> None:
    """Console handler on stderr (WARNING, INFO with -v, DEBUG with -vv) plus an optional log file."""
    package_logger = logging.getLogger(DOMAIN)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG)
    console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    package_logger.addHandler(console)
    if log_file is not None:
        package_logger.addHandler(_build_file_handler(pathlib.Path(log_file)))
    package_logger.setLevel(logging.DEBUG)


# ---------------------------------------------------------------------------
# Arguments
# ---------------------------------------------------------------------------


def _experiment_flags() -> argparse.ArgumentParser:
    """Flags shared by ``run`` and ``preset``; every default is None so the config file can fill in."""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--steps", type=int, help="number of time steps")
    p.add_argument("--trajectories", type=int, help="ensemble size")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--theta", type=float, help="coin angle in radians (default pi/4, Hadamard)")
    p.add_argument("--period", type=int, help="measure every T steps")
    p.add_argument("--interval-uniform", type=int, nargs=2, metavar=("A", "B"), help="measurement intervals uniform in [A, B]")
    p.add_argument("--intervals", type=int, nargs="+", metavar="T", help="explicit measurement intervals, repeated")
    p.add_argument("--p", type=float, help="link-breaking probability per step")
    p.add_argument("--snapshots", type=int, nargs="+", metavar="T", help="times of averaged distribution snapshots")
    p.add_argument("--out", help="output file")
    p.add_argument("--format", choices=OUTPUT_FORMATS, help="output format (default csv)")
    p.add_argument("--threads", type=int, help="worker threads (default $QWALK_THREADS or 1)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument(
        "--slope-threshold",
        type=float,
        default=CROSSOVER_SLOPE_THRESHOLD,
        help=f"log-log slope marking the crossover (default {CROSSOVER_SLOPE_THRESHOLD})",
    )
    return p


def _parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="qwalk", description="Decoherent quantum walk simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    p.add_argument("--log-file", help="also log to this rotating file at DEBUG level")
    sub = p.add_subparsers(dest="command", required=True)

    shared = _experiment_flags()
    run = sub.add_parser("run", parents=[shared], help="run one ensemble")
    run.add_argument("model", choices=sorted(MODEL_ALIASES))
    preset = sub.add_parser("preset", parents=[shared], help="run a figure preset")
    preset.add_argument("preset", choices=PRESET_NAMES)

    fit = sub.add_parser("fit", help="fit a variance series read from a result file")
    fit.add_argument("kind", choices=(FIT_DIFFUSION, FIT_BROWNIAN, FIT_QUADRATIC))
    fit.add_argument("input", help="CSV or JSON result file holding a variance series")
    fit.add_argument("--label", help="variance section to fit in a multi-series JSON file")
    fit.add_argument("--window", type=float, nargs=2, metavar=("START", "END"), help="time window of the fit")
    fit.add_argument("--fixed-c", type=float, help="hold C fixed in the brownian fit")
    fit.add_argument("--out", help="write the fit summary here")
    fit.add_argument("--format", choices=OUTPUT_FORMATS, default=OUTPUT_FORMATS[0])
    return p.parse_args(argv)


def _flags(args: argparse.Namespace) -> dict[str, Any]:
    flags: dict[str, Any] = {key: getattr(args, dest) for dest, key in _FLAG_KEYS.items()}
    if args.command == "run":
        flags[CONF_MODEL] = MODEL_ALIASES[args.model]
    else:
        flags[CONF_PRESET] = args.preset
    return flags


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _timescale(result: ResultFile, section: ResultSection) -> float | None:
    """Coherence time or 1/gamma of the run that produced *section*, from its embedded config."""
    raw = section.metadata.get("config") or result.metadata.get("config")
    if not raw or raw.get(CONF_MODEL) is None:
        return None
    config = parse_config(raw)
    if config.model == MODEL_BROKEN_LINKS and config.p:
        return coherence_time(config.p)
    if config.model == MODEL_MEASURED and config.schedule is not None:
        return config.schedule.mean_interval / 2
    return None


def _fit_rows(
    args: argparse.Namespace,
    series: VarianceSeries,
    window: tuple[float, float] | None,
    timescale: float | None,
) -> list[FitRow]:
    kind = args.kind
    if kind == FIT_DIFFUSION:
        d = fit_diffusion(series, window or default_tail(series, timescale))
        return [
            ("D", d.D, d.ci_low, d.ci_high),
            ("intercept", d.intercept, None, None),
            ("residual_norm", d.residual_norm, None, None),
            ("tail_start", d.window[0], None, None),
        ]
    if kind == FIT_BROWNIAN:
        b = fit_brownian(series, fixed_C=args.fixed_c, window=window)
        return [
            ("C", b.params.C, None, None),
            ("gamma", b.params.gamma, None, None),
            ("residual_norm", b.residual_norm, None, None),
            ("iterations", b.iterations, None, None),
            ("anchored", float(b.anchored), None, None),
        ]
    q = fit_quadratic_coefficient(series, window)
    return [
        ("C", q.C, None, None),
        ("relative_residual", q.relative_residual, None, None),
        ("poor", float(q.poor), None, None),
    ]


def _cmd_fit(args: argparse.Namespace) -> list[str]:
    source = read_result(args.input)
    section = source.section(RECORD_VARIANCE, args.label)
    series = series_from_section(section)
    window: tuple[float, float] | None = (args.window[0], args.window[1]) if args.window else None
    rows = _fit_rows(args, series, window, _timescale(source, section))
    lines = [f"{args.kind} fit of {args.input}:"]
    for name, value, lo, hi in rows:
        interval = f"  [{lo:.6g}, {hi:.6g}]" if lo is not None and hi is not None else ""
        lines.append(f"  {name} = {value:.6g}{interval}")
    if args.out:
        meta = {**source.metadata, "source": str(args.input), "fit": args.kind}
        out = ResultFile(metadata=meta, sections=(fit_section(rows, window=window),))
        written = write_result(out, args.out, args.format)
        lines.extend(f"wrote {path}" for path in written)
    return lines


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args.verbose, args.log_file)
    _LOGGER.debug("qwalk %s, arguments %s", __version__, vars(args))
    try:
        if args.command == "fit":
            lines = _cmd_fit(args)
        else:
            if not 1.0 < args.slope_threshold < 2.0:
                raise ConfigError(f"--slope-threshold must lie strictly between 1 and 2 (got {args.slope_threshold})")
            config = parse_config(_flags(args), args.config)
            report = run_experiment(config, slope_threshold=args.slope_threshold)
            lines = [*report.summary, *(f"wrote {path}" for path in report.files)]
    except OSError as err:
        sys.stderr.write(f"error: {err}\n")
        return 1
    except (QuantumWalkError, ValueError, KeyError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
