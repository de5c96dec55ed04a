"""Exploratory analytics over row streams.

Per-station traffic and error rates, per-line error rates, production
flow-path census, the time_diff feature, and date-axis periodicity via
normalized autocorrelation of the record-count series.

A part "passes through" a station when it has at least one present
feature of any kind there; an empty cell is the only missingness marker,
so 0.0 counts as a measurement.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateSeries, InvalidTick, MissingLabel, NoPeak
from .ingest import SparseRow

FlowPath = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class StationStats:
    station: int
    n_features_nonzero: int
    n_parts: int
    n_failures: int

    @property
    def error_rate(self) -> float:
        return self.n_failures / self.n_parts if self.n_parts > 0 else 0.0


def _visited_stations(row: SparseRow) -> set[int]:
    stations = {fid.station for fid, _ in row.numeric}
    stations.update(fid.station for fid, _ in row.date)
    stations.update(fid.station for fid, _ in row.categorical)
    return stations


def station_stats(rows: Iterable[SparseRow]) -> list[StationStats]:
    """Per-station feature, traffic, and failure counts (labels required)."""
    features: dict[int, set[str]] = {}
    parts: Counter[int] = Counter()
    failures: Counter[int] = Counter()
    for row in rows:
        if row.label is None:
            raise MissingLabel(f"row {row.id} has no label")
        stations = set()
        for pairs in (row.numeric, row.date, row.categorical):
            for fid, _ in pairs:
                stations.add(fid.station)
                features.setdefault(fid.station, set()).add(fid.raw_name)
        for st in stations:
            parts[st] += 1
            failures[st] += row.label
    return [
        StationStats(
            station=st,
            n_features_nonzero=len(features[st]),
            n_parts=parts[st],
            n_failures=failures[st],
        )
        for st in sorted(parts)
    ]


def line_error_rates(rows: Iterable[SparseRow]) -> dict[int, float]:
    """Fraction of failed parts per production line (labels required)."""
    parts: Counter[int] = Counter()
    failures: Counter[int] = Counter()
    for row in rows:
        if row.label is None:
            raise MissingLabel(f"row {row.id} has no label")
        lines = {fid.line for pairs in (row.numeric, row.date, row.categorical) for fid, _ in pairs}
        for ln in lines:
            parts[ln] += 1
            failures[ln] += row.label
    return {ln: failures[ln] / parts[ln] if parts[ln] else 0.0 for ln in sorted(parts)}


def flow_path(row: SparseRow) -> FlowPath:
    """Distinct (line, station) pairs visited, ordered by station then line."""
    pairs = {(fid.line, fid.station) for group in (row.numeric, row.date, row.categorical) for fid, _ in group}
    return tuple(sorted(pairs, key=lambda p: (p[1], p[0])))


def flow_path_census(rows: Iterable[SparseRow]) -> dict[FlowPath, int]:
    """Count of parts per distinct flow path."""
    census: Counter[FlowPath] = Counter()
    for row in rows:
        census[flow_path(row)] += 1
    return dict(census)


def format_flow_path(path: FlowPath) -> str:
    return ">".join(f"L{line}S{station}" for line, station in path)


def time_diff(row: SparseRow) -> Optional[float]:
    """Total time spent in the line: max - min of the date values."""
    if not row.date:
        return None
    values = [v for _, v in row.date]
    return max(values) - min(values)


def record_count_series(
    rows: Iterable[SparseRow], tick: float
) -> list[tuple[float, int]]:
    """Histogram of all present date values at the given tick, dense over
    [min, max]."""
    if tick <= 0:
        raise InvalidTick(f"tick must be positive, got {tick}")
    counts: Counter[int] = Counter()
    for row in rows:
        for _, value in row.date:
            counts[int(round(value / tick))] += 1
    if not counts:
        return []
    lo, hi = min(counts), max(counts)
    return [(i * tick, counts.get(i, 0)) for i in range(lo, hi + 1)]


def autocorrelation(
    series: Sequence[float],
    step: float = 1.0,
    max_lag: float = 5000.0,
) -> list[tuple[float, float]]:
    """Normalized sample autocorrelation of a count series.

    r(l) = sum_t (x_t - mean)(x_{t+l} - mean) / sum_t (x_t - mean)^2 for
    lags 0..L where L = min(len/2, max_lag/step); the lag axis is in the
    same units as ``step`` (ticks when fed a record-count series).
    Computed via FFT; identical to the direct sum up to rounding.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise DegenerateSeries("need a 1-d series of length >= 2")
    xd = x - x.mean()
    denom = float(np.dot(xd, xd))
    if denom <= len(x) * (1e-12 * max(1.0, abs(float(x.mean())))) ** 2:
        raise DegenerateSeries("series variance is zero")
    n_lags = min(len(x) // 2, int(round(max_lag / step)))
    n_lags = max(n_lags, 1)
    n_fft = 1
    while n_fft < 2 * len(x):
        n_fft *= 2
    spectrum = np.fft.rfft(xd, n_fft)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n_fft)[: n_lags + 1]
    r = acov / acov[0]
    return [(lag * step, float(value)) for lag, value in enumerate(r)]


@dataclass(frozen=True)
class PeriodReport:
    tick_granularity: float
    autocorrelation: list[tuple[float, float]]
    dominant_period: float
    secondary_period: Optional[float]


def detect_periods(acf: Sequence[tuple[float, float]]) -> tuple[float, Optional[float]]:
    """Dominant period = lag of the largest strict local maximum (lag > 0,
    ties to the leftmost); secondary = mean spacing of the local maxima
    below it, or None when there are none."""
    if len(acf) < 3:
        raise NoPeak("autocorrelation too short to contain a local maximum")
    lags = [lag for lag, _ in acf]
    values = [value for _, value in acf]
    maxima = [
        i
        for i in range(1, len(acf) - 1)
        if values[i] > values[i - 1] and values[i] > values[i + 1]
    ]
    if not maxima:
        raise NoPeak("no strict local maximum in the autocorrelation")
    best = max(maxima, key=lambda i: (values[i], -lags[i]))
    dominant = lags[best]
    below = [lags[i] for i in maxima if lags[i] < dominant]
    if not below:
        return dominant, None
    points = [0.0] + below
    spacings = [b - a for a, b in zip(points, points[1:])]
    return dominant, sum(spacings) / len(spacings)


def analyze_periodicity(
    rows: Iterable[SparseRow],
    tick: float,
    max_lag: float = 5000.0,
) -> PeriodReport:
    """record_count_series -> autocorrelation -> detect_periods, bundled."""
    series = record_count_series(rows, tick)
    acf = autocorrelation([count for _, count in series], step=tick, max_lag=max_lag)
    dominant, secondary = detect_periods(acf)
    return PeriodReport(
        tick_granularity=tick,
        autocorrelation=acf,
        dominant_period=dominant,
        secondary_period=secondary,
    )
