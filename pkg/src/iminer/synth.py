"""Deterministic synthetic web traffic with weekday and peak-hour structure."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Iterator

import numpy as np

from .ingest import TrafficSeries


@dataclass(frozen=True)
class TrafficProfile:
    base_daily_requests: int = 24000
    weekday_multiplier: float = 1.5
    peak_hours: tuple[int, int] = (11, 17)  # inclusive
    peak_multiplier: float = 2.0
    noise_fraction: float = 0.15
    bytes_per_request_mean: int = 8192

    def __post_init__(self):
        if self.weekday_multiplier <= 0 or self.peak_multiplier <= 0:
            raise ValueError("multipliers must be positive")
        lo, hi = self.peak_hours
        if not (0 <= lo <= hi <= 23):
            raise ValueError(f"peak window {self.peak_hours} must lie within 0..23")
        if not 0 <= self.noise_fraction < 1:
            raise ValueError("noise_fraction must be in [0, 1)")

    def expected(self, ts: datetime) -> float:
        v = self.base_daily_requests / 24.0
        if ts.weekday() < 5:
            v *= self.weekday_multiplier
        lo, hi = self.peak_hours
        if lo <= ts.hour <= hi:
            v *= self.peak_multiplier
        return v


def _as_start(start) -> datetime:
    if isinstance(start, datetime):
        return start.astimezone(timezone.utc) if start.tzinfo else start.replace(tzinfo=timezone.utc)
    if isinstance(start, date):
        return datetime(start.year, start.month, start.day, tzinfo=timezone.utc)
    return datetime.fromisoformat(str(start)).replace(tzinfo=timezone.utc)


def generate(profile: TrafficProfile, start, days: int, seed: int = 0) -> TrafficSeries:
    """Hourly series: expected volume times (1 + uniform noise), rounded to integers."""
    if days < 1:
        raise ValueError("days must be >= 1")
    t0 = _as_start(start).replace(hour=0, minute=0, second=0, microsecond=0)
    rng = np.random.default_rng(seed)
    n = days * 24
    starts = tuple(t0 + timedelta(hours=h) for h in range(n))
    expected = np.array([profile.expected(s) for s in starts])
    f = profile.noise_fraction
    req_noise = rng.uniform(-f, f, n)
    byte_noise = rng.uniform(-f, f, n)
    requests = np.rint(expected * (1.0 + req_noise)).astype(np.int64)
    nbytes = np.rint(requests * profile.bytes_per_request_mean * (1.0 + byte_noise)).astype(np.int64)
    return TrafficSeries("hourly", starts, np.maximum(requests, 0), np.maximum(nbytes, 0))


_PATHS = ("/", "/index.html", "/courses/", "/research/", "/library/search", "/news/", "/staff/directory",
          "/images/logo.gif", "/css/site.css", "/admissions/apply")


def log_lines(series: TrafficSeries, seed: int = 0) -> Iterator[str]:
    """Common Log Format lines reproducing ``series`` exactly when re-aggregated.

    Each bucket's requests are spread over the bucket and its byte total is
    split across them (integer parts summing to the bucket total).
    """
    rng = np.random.default_rng(seed)
    span = 3600 if series.granularity == "hourly" else 86400
    for s, n, total in zip(series.starts, series.requests, series.bytes):
        n, total = int(n), int(total)
        if n == 0:
            continue
        offsets = np.sort(rng.integers(0, span, n))
        cuts = np.sort(rng.integers(0, total + 1, n - 1))
        sizes = np.diff(np.concatenate([[0], cuts, [total]]))
        hosts = rng.integers(1, 255, size=(n, 2))
        paths = rng.integers(0, len(_PATHS), n)
        for k in range(n):
            ts = (s + timedelta(seconds=int(offsets[k]))).strftime("%d/%b/%Y:%H:%M:%S +0000")
            size = "-" if sizes[k] == 0 else str(int(sizes[k]))
            yield (f"10.0.{hosts[k, 0]}.{hosts[k, 1]} - - [{ts}] "
                   f"\"GET {_PATHS[paths[k]]} HTTP/1.0\" 200 {size}")
