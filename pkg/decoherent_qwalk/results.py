"""Result files: CSV (one series per file) and JSON bundles.

A CSV file starts with ``# key: <json>`` metadata lines followed by a header
row and the records.  Floats are written with ``repr`` so a file read back
holds the exact values that were written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import pathlib
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np

from . import __version__
from .config import emit_config
from .const import (
    DISTRIBUTION_COLUMNS,
    DOMAIN,
    FIT_COLUMNS,
    FORMAT_CSV,
    FORMAT_JSON,
    OUTPUT_FORMATS,
    OVERLAY_COLUMNS,
    RECORD_DISTRIBUTION,
    RECORD_FIT,
    RECORD_OVERLAY,
    RECORD_VARIANCE,
    RESULT_COMMENT,
    VARIANCE_COLUMNS,
)
from .models import EnsembleResult, ExperimentConfig, ResultFile, ResultSection, SiteDistribution, VarianceSeries

_LOGGER = logging.getLogger(__name__)

# Metadata keys describing the section rather than the file.
_SECTION_KEYS = ("kind", "label", "section")

FitRow = tuple[str, float, float | None, float | None]


def _plain(value: Any) -> Any:
    """Convert numpy scalars and containers into JSON-native values."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def file_metadata(config: ExperimentConfig, **extra: Any) -> dict[str, Any]:
    """Header shared by every file of a run: tool, version and the embedded config."""
    meta: dict[str, Any] = {"tool": DOMAIN, "version": __version__, "config": emit_config(config, include_runtime=False)}
    meta.update(_plain(extra))
    return meta


def variance_section(result: EnsembleResult, label: str = "", config: ExperimentConfig | None = None) -> ResultSection:
    series = result.series
    mean_traj = series.sigma2 if series.mean_trajectory_sigma2 is None else series.mean_trajectory_sigma2
    rows = tuple(
        (int(t), float(s), float(e), float(m))
        for t, s, e, m in zip(series.times, series.sigma2, series.standard_errors, mean_traj, strict=True)
    )
    meta: dict[str, Any] = {"ensemble_size": series.ensemble_size, **_plain(result.metadata)}
    if config is not None:
        meta["config"] = emit_config(config, include_runtime=False)
    return ResultSection(kind=RECORD_VARIANCE, columns=VARIANCE_COLUMNS, rows=rows, label=label, metadata=meta)


def distribution_section(dist: SiteDistribution, t: int, label: str = "") -> ResultSection:
    rows = tuple((int(n), float(p)) for n, p in zip(dist.sites, dist.probabilities, strict=True))
    return ResultSection(
        kind=RECORD_DISTRIBUTION, columns=DISTRIBUTION_COLUMNS, rows=rows, label=label, metadata={"t": int(t)}
    )


def fit_section(rows: Iterable[FitRow], label: str = "", **metadata: Any) -> ResultSection:
    clean = tuple(
        (name, float(value), None if lo is None else float(lo), None if hi is None else float(hi))
        for name, value, lo, hi in rows
    )
    return ResultSection(kind=RECORD_FIT, columns=FIT_COLUMNS, rows=clean, label=label, metadata=_plain(metadata))


def overlay_section(
    series: VarianceSeries, model: Sequence[float], label: str = "", **metadata: Any
) -> ResultSection:
    rows = []
    for t, s, b in zip(series.times, series.sigma2, model, strict=True):
        rel = (float(s) - float(b)) / float(b) if b > 0 else 0.0
        rows.append((int(t), float(s), float(b), rel))
    return ResultSection(
        kind=RECORD_OVERLAY, columns=OVERLAY_COLUMNS, rows=tuple(rows), label=label, metadata=_plain(metadata)
    )


def series_from_section(section: ResultSection) -> VarianceSeries:
    """Rebuild a VarianceSeries from a variance section read back from disk."""
    if section.kind != RECORD_VARIANCE:
        raise ValueError(f"expected a {RECORD_VARIANCE!r} section (got {section.kind!r})")
    cols = {name: i for i, name in enumerate(section.columns)}
    data = np.array([[row[cols[c]] for c in VARIANCE_COLUMNS] for row in section.rows], dtype=np.float64)
    if data.size == 0:
        raise ValueError("variance section has no records")
    return VarianceSeries.from_values(
        data[:, 0].astype(np.int64),
        data[:, 1],
        data[:, 2],
        ensemble_size=int(section.metadata.get("ensemble_size", 1)),
        mean_trajectory_sigma2=data[:, 3],
    )


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _section_path(path: pathlib.Path, label: str) -> pathlib.Path:
    if not label:
        return path
    return path.with_name(f"{path.stem}_{label}{path.suffix or '.csv'}")


def _csv_text(metadata: dict[str, Any], section: ResultSection) -> str:
    buf = io.StringIO()
    header = {**metadata, "kind": section.kind, "label": section.label, "section": section.metadata}
    for key, value in header.items():
        buf.write(f"{RESULT_COMMENT} {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(section.columns)
    for row in section.rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(result: ResultFile) -> str:
    doc = {
        "metadata": result.metadata,
        "sections": [
            {
                "kind": sec.kind,
                "label": sec.label,
                "metadata": sec.metadata,
                "columns": list(sec.columns),
                "rows": [list(row) for row in sec.rows],
            }
            for sec in result.sections
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_result(result: ResultFile, path: str | pathlib.Path, fmt: str = FORMAT_CSV) -> list[pathlib.Path]:
    """Write *result*; returns the files written.

    JSON puts every section in one file.  CSV writes one file per section:
    an unlabelled section goes to *path*, a labelled one to
    ``<stem>_<label><suffix>`` next to it.
    """
    if fmt not in OUTPUT_FORMATS:
        raise ValueError(f"unknown output format {fmt!r}; expected one of {OUTPUT_FORMATS}")
    target = pathlib.Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if fmt == FORMAT_JSON:
        target.write_text(_json_text(result), encoding="utf-8")
        written = [target]
    else:
        written = []
        for section in result.sections:
            out = _section_path(target, section.label)
            if out in written:
                raise ValueError(f"two sections would be written to {out}")
            out.write_text(_csv_text(result.metadata, section), encoding="utf-8")
            written.append(out)
    for out in written:
        _LOGGER.info("Wrote %s", out)
    return written


# ---------------------------------------------------------------------------
# Readers
# ---------------------------------------------------------------------------


def _cell(text: str) -> Any:
    if text == "":
        return None
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def _read_csv(text: str) -> ResultFile:
    header: dict[str, Any] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith(RESULT_COMMENT) and not body:
            key, sep, value = line[len(RESULT_COMMENT) :].strip().partition(":")
            if not sep:
                raise ValueError(f"malformed metadata line {line!r}")
            header[key.strip()] = json.loads(value)
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError("result file has no header row")
    reader = csv.reader(body)
    columns = tuple(next(reader))
    rows = tuple(tuple(_cell(v) for v in row) for row in reader)
    section = ResultSection(
        kind=str(header.get("kind", RECORD_VARIANCE)),
        columns=columns,
        rows=rows,
        label=str(header.get("label", "")),
        metadata=header.get("section", {}),
    )
    metadata = {k: v for k, v in header.items() if k not in _SECTION_KEYS}
    return ResultFile(metadata=metadata, sections=(section,))


def _read_json(text: str) -> ResultFile:
    doc = json.loads(text)
    sections = tuple(
        ResultSection(
            kind=sec["kind"],
            columns=tuple(sec["columns"]),
            rows=tuple(tuple(row) for row in sec["rows"]),
            label=sec.get("label", ""),
            metadata=sec.get("metadata", {}),
        )
        for sec in doc["sections"]
    )
    return ResultFile(metadata=doc.get("metadata", {}), sections=sections)


def read_result(path: str | pathlib.Path) -> ResultFile:
    """Parse a CSV or JSON result file (chosen by suffix) back into metadata and records."""
    source = pathlib.Path(path)
    text = source.read_text(encoding="utf-8")
    try:
        if source.suffix.lower() == f".{FORMAT_JSON}":
            return _read_json(text)
        return _read_csv(text)
    except (ValueError, KeyError, StopIteration) as err:
        raise ValueError(f"{source}: not a result file ({err})") from err
