"""Access-log parsing, traffic aggregation and model-ready feature tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence

import numpy as np

GRANULARITIES = {"hourly": timedelta(hours=1), "daily": timedelta(days=1)}
SERIES_COLUMNS = ("bucket_start", "requests", "bytes")
FEATURE_COLUMNS = ("index", "requests", "bytes", "cluster", "target")
_SCALED = ("index", "requests", "bytes")


class LogParseError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class LogRecord:
    host: str
    user: Optional[str]
    timestamp: datetime
    request: str
    status: int
    bytes: int


def _take_token(line: str, pos: int, name: str) -> tuple[str, int]:
    while pos < len(line) and line[pos] == " ":
        pos += 1
    if pos >= len(line):
        raise LogParseError(name, "missing")
    end = line.find(" ", pos)
    if end < 0:
        end = len(line)
    return line[pos:end], end


def _take_bracketed(line: str, pos: int, name: str, open_: str, close: str) -> tuple[str, int]:
    while pos < len(line) and line[pos] == " ":
        pos += 1
    if pos >= len(line) or line[pos] != open_:
        raise LogParseError(name, f"expected {open_!r}")
    end = pos + 1
    while end < len(line):
        if close == '"' and line[end] == "\\":
            end += 2
            continue
        if line[end] == close:
            return line[pos + 1:end], end + 1
        end += 1
    raise LogParseError(name, f"unterminated, expected {close!r}")


def parse_log_line(line: str) -> LogRecord:
    """Parse one Common or Combined Log Format line.

    Raises :class:`LogParseError` whose ``field`` names the first bad field.
    """
    line = line.rstrip("\r\n")
    host, pos = _take_token(line, 0, "host")
    _ident, pos = _take_token(line, pos, "ident")
    user, pos = _take_token(line, pos, "user")
    raw_ts, pos = _take_bracketed(line, pos, "timestamp", "[", "]")
    try:
        ts = datetime.strptime(raw_ts, "%d/%b/%Y:%H:%M:%S %z").astimezone(timezone.utc)
    except ValueError as exc:
        raise LogParseError("timestamp", f"cannot parse {raw_ts!r}") from exc
    request, pos = _take_bracketed(line, pos, "request", '"', '"')
    raw_status, pos = _take_token(line, pos, "status")
    if not (raw_status.isdigit() and 100 <= int(raw_status) <= 599):
        raise LogParseError("status", f"invalid HTTP status {raw_status!r}")
    raw_bytes, pos = _take_token(line, pos, "bytes")
    if raw_bytes == "-":
        nbytes = 0
    elif raw_bytes.isdigit():
        nbytes = int(raw_bytes)
    else:
        raise LogParseError("bytes", f"invalid byte count {raw_bytes!r}")
    # combined format: optional "referer" "user-agent"; anything else is junk
    rest = line[pos:].strip()
    if rest:
        for name in ("referer", "user_agent"):
            if not rest:
                break
            _, used = _take_bracketed(rest, 0, name, '"', '"')
            rest = rest[used:].strip()
        if rest:
            raise LogParseError("trailer", f"unexpected text {rest[:30]!r}")
    return LogRecord(host, None if user == "-" else user, ts, request, int(raw_status), nbytes)


def parse_lines(lines: Iterable[str]) -> tuple[list[LogRecord], int]:
    """Parse many lines, skipping malformed ones. Returns (records, skipped)."""
    records, skipped = [], 0
    for line in lines:
        if not line.strip():
            continue
        try:
            records.append(parse_log_line(line))
        except LogParseError:
            skipped += 1
    return records, skipped


def _floor(ts: datetime, granularity: str) -> datetime:
    ts = ts.astimezone(timezone.utc)
    if granularity == "hourly":
        return ts.replace(minute=0, second=0, microsecond=0)
    return ts.replace(hour=0, minute=0, second=0, microsecond=0)


def _check_granularity(granularity: str) -> timedelta:
    try:
        return GRANULARITIES[granularity]
    except KeyError:
        raise ValueError(f"granularity must be 'hourly' or 'daily', got {granularity!r}") from None


@dataclass(frozen=True)
class TrafficSeries:
    granularity: str
    starts: tuple[datetime, ...]
    requests: np.ndarray
    bytes: np.ndarray

    def __post_init__(self):
        step = _check_granularity(self.granularity)
        starts = tuple(s.astimezone(timezone.utc) for s in self.starts)
        req = np.asarray(self.requests, dtype=np.int64)
        nb = np.asarray(self.bytes, dtype=np.int64)
        if not (len(starts) == len(req) == len(nb)):
            raise ValueError("starts, requests and bytes must have equal length")
        if np.any(req < 0) or np.any(nb < 0):
            raise ValueError("requests and bytes must be non-negative")
        for a, b in zip(starts, starts[1:]):
            if b - a != step:
                raise ValueError(f"buckets must be contiguous {self.granularity} steps ({a} -> {b})")
        req.setflags(write=False)
        nb.setflags(write=False)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "requests", req)
        object.__setattr__(self, "bytes", nb)

    def __len__(self) -> int:
        return len(self.starts)


def aggregate(records: Sequence[LogRecord], granularity: str) -> TrafficSeries:
    """Count requests and sum bytes per hour or day; interior gaps become zero buckets."""
    step = _check_granularity(granularity)
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    counts: dict[datetime, list[int]] = {}
    for rec in records:
        key = _floor(rec.timestamp, granularity)
        slot = counts.setdefault(key, [0, 0])
        slot[0] += 1
        slot[1] += rec.bytes
    first, last = min(counts), max(counts)
    n = int((last - first) / step) + 1
    starts = tuple(first + k * step for k in range(n))
    req = np.array([counts.get(s, (0, 0))[0] for s in starts], dtype=np.int64)
    nb = np.array([counts.get(s, (0, 0))[1] for s in starts], dtype=np.int64)
    return TrafficSeries(granularity, starts, req, nb)


def to_daily(series: TrafficSeries) -> TrafficSeries:
    """Sum an hourly series into daily buckets (partial first/last days included)."""
    if series.granularity == "daily":
        return series
    days: dict[datetime, list[int]] = {}
    for s, r, b in zip(series.starts, series.requests, series.bytes):
        slot = days.setdefault(_floor(s, "daily"), [0, 0])
        slot[0] += int(r)
        slot[1] += int(b)
    starts = tuple(sorted(days))
    return TrafficSeries("daily", starts, [days[s][0] for s in starts], [days[s][1] for s in starts])


@dataclass(frozen=True)
class Scaler:
    """Per-column (min, max) pairs; the target shares the requests range."""

    ranges: dict

    @classmethod
    def fit(cls, table: "FeatureTable") -> "Scaler":
        ranges = {}
        for name in _SCALED:
            col = getattr(table, name)
            ranges[name] = (float(col.min()), float(col.max()))
        return cls(ranges)

    def transform(self, name: str, values) -> np.ndarray:
        lo, hi = self.ranges["requests" if name == "target" else name]
        values = np.asarray(values, dtype=np.float64)
        if hi == lo:
            return np.full_like(values, 0.5)
        return (values - lo) / (hi - lo)

    def inverse(self, name: str, values) -> np.ndarray:
        lo, hi = self.ranges["requests" if name == "target" else name]
        values = np.asarray(values, dtype=np.float64)
        if hi == lo:
            return np.full_like(values, lo)
        return values * (hi - lo) + lo


@dataclass(frozen=True)
class FeatureTable:
    """Rows of (index, requests, bytes, cluster, target) in row order.

    ``starts`` keeps the bucket start of each row (``None`` when the table
    was read from a CSV without timestamps). When ``scaler`` is set the
    index/requests/bytes/target columns hold scaled values.
    """

    index: np.ndarray
    requests: np.ndarray
    bytes: np.ndarray
    target: np.ndarray
    cluster: Optional[np.ndarray] = None
    starts: Optional[tuple] = None
    scaler: Optional[Scaler] = None
    raw_index: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.index)
        for name in ("index", "requests", "bytes", "target"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"column {name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.cluster is not None:
            cl = np.asarray(self.cluster, dtype=np.int64)
            if cl.shape != (n,):
                raise ValueError("cluster column length mismatch")
            object.__setattr__(self, "cluster", cl)
        if self.starts is not None and len(self.starts) != n:
            raise ValueError("starts length mismatch")
        raw = self.raw_index if self.raw_index is not None else self.index
        object.__setattr__(self, "raw_index", np.asarray(raw, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.index)

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=np.intp)
        return replace(
            self,
            index=self.index[rows],
            requests=self.requests[rows],
            bytes=self.bytes[rows],
            target=self.target[rows],
            cluster=None if self.cluster is None else self.cluster[rows],
            starts=None if self.starts is None else tuple(self.starts[k] for k in rows),
            raw_index=self.raw_index[rows],
        )


def design_matrix(table: FeatureTable, n_clusters: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Model inputs ``(index, requests, bytes, cluster)`` and the target vector.

    The cluster id is scaled to ``cluster / (n_clusters - 1)``; without
    cluster information (or with a single cluster) the column is zero.
    """
    if table.cluster is None or n_clusters is None or n_clusters < 2:
        cl = np.zeros(len(table))
    else:
        cl = table.cluster / float(n_clusters - 1)
    return np.column_stack([table.index, table.requests, table.bytes, cl]), table.target.copy()


def build_features(series: TrafficSeries, horizon: int = 1) -> FeatureTable:
    """One row per bucket that has a value ``horizon`` steps ahead.

    The target is the request count ``horizon`` buckets later; index numbers
    run 1..n in time order so the newest row carries the largest index.
    """
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    n = len(series) - horizon
    if n < 1:
        raise ValueError(f"series of {len(series)} buckets is too short for horizon {horizon}")
    idx = np.arange(1, n + 1)
    return FeatureTable(
        index=idx,
        requests=series.requests[:n],
        bytes=series.bytes[:n],
        target=series.requests[horizon:horizon + n],
        starts=series.starts[:n],
    )


def normalize(table: FeatureTable, scaler: Optional[Scaler] = None) -> FeatureTable:
    """Min-max scale index/requests/bytes (and the target, on the requests range).

    Fit the scaler on the training split and pass it in for the test split.
    """
    if len(table) == 0:
        raise ValueError("cannot normalize an empty table")
    if table.scaler is not None:
        raise ValueError("table is already normalized")
    scaler = scaler or Scaler.fit(table)
    return replace(
        table,
        index=scaler.transform("index", table.index),
        requests=scaler.transform("requests", table.requests),
        bytes=scaler.transform("bytes", table.bytes),
        target=scaler.transform("target", table.target),
        scaler=scaler,
    )


def denormalize(table: FeatureTable) -> FeatureTable:
    if table.scaler is None:
        return table
    s = table.scaler
    return replace(
        table,
        index=s.inverse("index", table.index),
        requests=s.inverse("requests", table.requests),
        bytes=s.inverse("bytes", table.bytes),
        target=s.inverse("target", table.target),
        scaler=None,
    )


def split(table: FeatureTable, boundary: datetime) -> tuple[FeatureTable, FeatureTable]:
    """Rows whose bucket starts before ``boundary`` train; the rest test."""
    if table.starts is None:
        raise ValueError("table has no timestamps; use split_last")
    if boundary.tzinfo is None:
        boundary = boundary.replace(tzinfo=timezone.utc)
    before = np.array([s < boundary for s in table.starts], dtype=bool)
    if not before.any():
        raise ValueError(f"no rows before {boundary.isoformat()}")
    if before.all():
        raise ValueError(f"no rows at or after {boundary.isoformat()}")
    return table.take(np.flatnonzero(before)), table.take(np.flatnonzero(~before))


def split_last(table: FeatureTable, n_test: int) -> tuple[FeatureTable, FeatureTable]:
    if not 0 < n_test < len(table):
        raise ValueError(f"cannot hold out {n_test} of {len(table)} rows")
    k = len(table) - n_test
    return table.take(np.arange(k)), table.take(np.arange(k, len(table)))


def reindex_by_cluster(table: FeatureTable, assignments, start: Optional[int] = None) -> FeatureTable:
    """Attach cluster ids, stable-sort rows by (cluster, time) and renumber.

    New index numbers run ``start, start+1, ...`` in the sorted order
    (``start`` defaults to the table's smallest current index number). On a
    normalized table the new numbers are scaled with the table's scaler.
    """
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.shape != (len(table),):
        raise ValueError(f"{len(assignments)} assignments for {len(table)} rows")
    if table.starts is not None:
        time_key = np.array([s.timestamp() for s in table.starts])
    else:
        time_key = table.raw_index
    order = np.lexsort((time_key, assignments))
    out = table.take(order)
    if start is None:
        start = int(table.raw_index.min()) if len(table) else 1
    new_raw = np.arange(start, start + len(table))
    new_index = new_raw if table.scaler is None else table.scaler.transform("index", new_raw)
    return replace(out, cluster=assignments[order], index=new_index, raw_index=new_raw)


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat()


def _fmt(v: float) -> str:
    return repr(float(v))


def write_series_csv(series: TrafficSeries, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for s, r, b in zip(series.starts, series.requests, series.bytes):
        w.writerow([_iso(s), int(r), int(b)])


def read_series_csv(fh, granularity: Optional[str] = None) -> TrafficSeries:
    rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("series CSV has no rows")
    missing = set(SERIES_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"series CSV lacks columns {sorted(missing)}")
    starts = tuple(datetime.fromisoformat(r["bucket_start"]).astimezone(timezone.utc) for r in rows)
    if granularity is None:
        granularity = "daily" if len(starts) > 1 and starts[1] - starts[0] == timedelta(days=1) else "hourly"
    return TrafficSeries(granularity, starts, [int(r["requests"]) for r in rows], [int(r["bytes"]) for r in rows])


def write_features_csv(table: FeatureTable, fh, raw: bool = True) -> None:
    """Write ``bucket_start,index,requests,bytes,cluster,target``.

    ``raw`` writes unscaled values with integer index numbers; the scaler
    is never serialized, so normalized tables are written raw by default.
    """
    t = denormalize(table) if raw else table
    w = csv.writer(fh, lineterminator="\n")
    cols = list(FEATURE_COLUMNS)
    if t.starts is not None:
        cols = ["bucket_start"] + cols
    w.writerow(cols)
    for k in range(len(t)):
        row = [int(t.raw_index[k]) if raw else _fmt(t.index[k]), _fmt(t.requests[k]), _fmt(t.bytes[k]),
               "" if t.cluster is None else int(t.cluster[k]), _fmt(t.target[k])]
        if t.starts is not None:
            row = [_iso(t.starts[k])] + row
        w.writerow(row)


def read_features_csv(fh) -> FeatureTable:
    rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("feature CSV has no rows")
    missing = set(FEATURE_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"feature CSV lacks columns {sorted(missing)}")
    cluster = None
    if all(r["cluster"] not in ("", None) for r in rows):
        cluster = [int(r["cluster"]) for r in rows]
    starts = None
    if "bucket_start" in rows[0]:
        starts = tuple(datetime.fromisoformat(r["bucket_start"]).astimezone(timezone.utc) for r in rows)
    index = np.array([float(r["index"]) for r in rows])
    raw_index = np.rint(index).astype(np.int64) if np.all(index == np.rint(index)) else np.arange(1, len(rows) + 1)
    return FeatureTable(
        index=index,
        requests=[float(r["requests"]) for r in rows],
        bytes=[float(r["bytes"]) for r in rows],
        target=[float(r["target"]) for r in rows],
        cluster=cluster,
        starts=starts,
        raw_index=raw_index,
    )


def series_to_csv_text(series: TrafficSeries) -> str:
    buf = io.StringIO()
    write_series_csv(series, buf)
    return buf.getvalue()

