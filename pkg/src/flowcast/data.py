"""Loading, validation and imputation of traffic-count time series.

Raw input is delimiter-separated text with a header row. The column mapping
(timestamp column, flow column, delimiter) is configurable so arbitrary
open-data exports can be adapted without code changes. Series are normalized
onto a dense fixed-spacing grid; gaps become masked slots.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import DataQualityError

DEFAULT_STEP_SECONDS = 900  # 15-minute slots
DEFAULT_MISSING_THRESHOLD = 0.03

CACHE_MAGIC = "#flowcast-series"
CACHE_VERSION = 1


@dataclass(frozen=True)
class ColumnSchema:
    """Mapping from raw file columns to series fields."""

    timestamp: str = "timestamp"
    flow: str = "flow"
    delimiter: str = ","
    step_seconds: int = DEFAULT_STEP_SECONDS


@dataclass
class TimeSeries:
    """A uniformly sampled univariate flow series with gap annotations.

    values[i] is the count for the slot starting at start + i*step; masked
    slots carry NaN in `values` and True in `missing_mask`.
    """

    values: np.ndarray
    missing_mask: np.ndarray
    start: datetime
    step_seconds: int = DEFAULT_STEP_SECONDS
    sensor_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if self.values.ndim != 1 or self.values.shape != self.missing_mask.shape:
            raise ValueError("values and missing_mask must be 1-D and aligned")
        present = self.values[~self.missing_mask]
        if present.size and (not np.all(np.isfinite(present)) or np.any(present < 0)):
            raise ValueError(f"sensor {self.sensor_id!r}: unmasked values must be finite and >= 0")

    def __len__(self) -> int:
        return self.values.size

    @property
    def timestamps(self) -> list[datetime]:
        step = timedelta(seconds=self.step_seconds)
        return [self.start + i * step for i in range(len(self))]

    @property
    def missing_fraction(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.count_nonzero(self.missing_mask)) / len(self)


def _parse_timestamp(raw: str) -> datetime:
    raw = raw.strip()
    try:
        return datetime.fromtimestamp(float(raw), tz=timezone.utc).replace(tzinfo=None)
    except ValueError:
        pass
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValueError(f"unparseable timestamp {raw!r}") from exc
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def load_series(path: str | Path, schema: ColumnSchema | None = None,
                sensor_id: str | None = None) -> TimeSeries:
    """Load a raw sensor file and normalize it onto a dense time grid.

    Rows are sorted by timestamp; absent slots become masked entries.
    Duplicate timestamps, unparseable rows and spacings that are not a
    multiple of the grid step are errors.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    if sensor_id is None:
        sensor_id = path.stem
    rows: list[tuple[datetime, float | None]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise DataQualityError(f"{path}: empty file")
        for col in (schema.timestamp, schema.flow):
            if col not in reader.fieldnames:
                raise DataQualityError(f"{path}: missing column {col!r} (have {reader.fieldnames})")
        for lineno, row in enumerate(reader, start=2):
            raw_ts = row.get(schema.timestamp)
            raw_flow = row.get(schema.flow)
            if raw_ts is None:
                raise DataQualityError(f"{path}:{lineno}: short row")
            try:
                ts = _parse_timestamp(raw_ts)
            except ValueError as exc:
                raise DataQualityError(f"{path}:{lineno}: {exc}") from exc
            if raw_flow is None or raw_flow.strip() == "":
                flow: float | None = None
            else:
                try:
                    flow = float(raw_flow)
                except ValueError as exc:
                    raise DataQualityError(f"{path}:{lineno}: unparseable count {raw_flow!r}") from exc
                if not math.isfinite(flow) or flow < 0:
                    raise DataQualityError(f"{path}:{lineno}: count must be finite and >= 0, got {raw_flow!r}")
            rows.append((ts, flow))
    if not rows:
        raise DataQualityError(f"{path}: no data rows")

    rows.sort(key=lambda r: r[0])
    start = rows[0][0]
    offsets = []
    for ts, _ in rows:
        delta = (ts - start).total_seconds()
        slots = delta / schema.step_seconds
        if abs(slots - round(slots)) > 1e-9:
            raise DataQualityError(
                f"{path}: timestamp {ts.isoformat()} is not aligned to the "
                f"{schema.step_seconds}s grid starting at {start.isoformat()}")
        offsets.append(int(round(slots)))
    n = offsets[-1] + 1
    values = np.full(n, np.nan)
    mask = np.ones(n, dtype=bool)
    seen = set()
    for (ts, flow), slot in zip(rows, offsets):
        if slot in seen:
            raise DataQualityError(f"{path}: duplicate timestamp {ts.isoformat()}")
        seen.add(slot)
        if flow is not None:
            values[slot] = flow
            mask[slot] = False
    return TimeSeries(values=values, missing_mask=mask, start=start,
                      step_seconds=schema.step_seconds, sensor_id=sensor_id)


def impute(series: TimeSeries,
           max_missing_fraction: float = DEFAULT_MISSING_THRESHOLD) -> TimeSeries:
    """Fill masked slots: linear interpolation inside, nearest value at edges.

    Raises DataQualityError when the masked fraction exceeds the threshold or
    no unmasked values exist. Unmasked values are preserved exactly; the
    operation is idempotent.
    """
    frac = series.missing_fraction
    if frac > max_missing_fraction:
        raise DataQualityError(
            f"sensor {series.sensor_id!r}: {frac:.2%} missing exceeds the "
            f"{max_missing_fraction:.2%} threshold")
    known = np.flatnonzero(~series.missing_mask)
    if known.size == 0:
        raise DataQualityError(f"sensor {series.sensor_id!r}: all slots missing")
    if known.size < 2 and np.any(series.missing_mask):
        raise DataQualityError(f"sensor {series.sensor_id!r}: fewer than 2 known values")
    values = series.values.copy()
    gaps = np.flatnonzero(series.missing_mask)
    if gaps.size:
        # np.interp holds the edge value outside the known range and
        # interpolates linearly between neighbors inside it.
        values[gaps] = np.interp(gaps, known, values[known])
    return TimeSeries(values=values, missing_mask=np.zeros(len(series), dtype=bool),
                      start=series.start, step_seconds=series.step_seconds,
                      sensor_id=series.sensor_id)


def save_cache(series: TimeSeries, path: str | Path, source_hash: str = "",
               meta: str = "") -> None:
    """Write a series to the versioned text cache format.

    Floats are written with repr so the round-trip is bit-exact; masked
    slots are written as empty lines.
    """
    path = Path(path)
    lines = [f"{CACHE_MAGIC} v{CACHE_VERSION}",
             f"sensor_id={series.sensor_id}",
             f"start={series.start.isoformat()}",
             f"step_seconds={series.step_seconds}",
             f"n={len(series)}",
             f"source_hash={source_hash}",
             f"meta={meta}"]
    for v, missing in zip(series.values, series.missing_mask):
        lines.append("" if missing else repr(float(v)))
    path.write_text("\n".join(lines) + "\n")


def load_cache(path: str | Path) -> TimeSeries:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(CACHE_MAGIC):
        raise DataQualityError(f"{path}: not a series cache file")
    version = lines[0].split("v")[-1]
    if int(version) != CACHE_VERSION:
        raise DataQualityError(f"{path}: unsupported cache version {version}")
    header: dict[str, str] = {}
    body_at = 1
    for i, line in enumerate(lines[1:], start=1):
        if "=" not in line:
            body_at = i
            break
        key, _, val = line.partition("=")
        header[key] = val
        body_at = i + 1
    n = int(header["n"])
    raw = lines[body_at:body_at + n]
    if len(raw) != n:
        raise DataQualityError(f"{path}: truncated cache (expected {n} values)")
    values = np.full(n, np.nan)
    mask = np.ones(n, dtype=bool)
    for i, line in enumerate(raw):
        if line:
            values[i] = float(line)
            mask[i] = False
    return TimeSeries(values=values, missing_mask=mask,
                      start=datetime.fromisoformat(header["start"]),
                      step_seconds=int(header["step_seconds"]),
                      sensor_id=header.get("sensor_id", ""))


def cache_source_hash(path: str | Path) -> str:
    """Read back the source hash recorded in a cache file, or ""."""
    try:
        with open(path) as fh:
            for line in fh:
                if line.startswith("source_hash="):
                    return line.partition("=")[2].strip()
                if "=" not in line and not line.startswith(CACHE_MAGIC):
                    break
    except OSError:
        return ""
    return ""
