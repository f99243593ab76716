"""Spectrum features: FFT, band RMS, dominant-band selection, A_t and exceedance areas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, time
from enum import Enum
from itertools import groupby
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    LOCAL_TZ,
    SENSOR_POINTS,
    FreqClass,
    Location,
    ServiceWindow,
    ThresholdRow,
    default_thresholds,
    sensor_point,
)

FULL_RANGE_KHZ = 12.8
NOISE_BAND_KHZ = (0.0, 0.5)
AT_DIVISOR = 1.5


class Status(str, Enum):
    NORMAL = "Normal"
    ALERT = "Alert"
    ALARM = "Alarm"


@dataclass(frozen=True, eq=False)
class SpectrumRecord:
    escalator_id: int
    point_id: int
    timestamp: datetime
    bin_hz: float
    magnitudes: np.ndarray

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=float)
        if mags.ndim != 1 or mags.size == 0:
            raise ValueError("magnitudes must be a non-empty 1-D array")
        if np.any(mags < 0) or not np.all(np.isfinite(mags)):
            raise ValueError("magnitudes must be finite and non-negative")
        if self.bin_hz <= 0:
            raise ValueError("bin_hz must be positive")
        object.__setattr__(self, "magnitudes", mags)

    def scaled(self, factor: float) -> "SpectrumRecord":
        return SpectrumRecord(
            self.escalator_id, self.point_id, self.timestamp, self.bin_hz, self.magnitudes * factor
        )


@dataclass(frozen=True)
class BandStats:
    lo_khz: float
    hi_khz: float
    median_rms: float
    extreme_count: int
    score: float


@dataclass(frozen=True)
class BandSelection:
    freq_class: FreqClass
    band_lo_khz: float
    band_hi_khz: float
    stats: tuple[BandStats, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not 0 <= self.band_lo_khz < self.band_hi_khz <= FULL_RANGE_KHZ:
            raise ValueError(f"invalid band [{self.band_lo_khz}, {self.band_hi_khz}]")

    def to_json(self) -> dict:
        return {
            "freq_class": self.freq_class.value,
            "band_lo_khz": self.band_lo_khz,
            "band_hi_khz": self.band_hi_khz,
            "stats": [
                {
                    "lo_khz": s.lo_khz,
                    "hi_khz": s.hi_khz,
                    "median_rms": s.median_rms,
                    "extreme_count": s.extreme_count,
                    "score": s.score,
                }
                for s in self.stats
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "BandSelection":
        stats = tuple(BandStats(**s) for s in d.get("stats", ()))
        return cls(FreqClass(d["freq_class"]), float(d["band_lo_khz"]), float(d["band_hi_khz"]), stats)


# Reference bands, used when no corpus-derived selection exists.
DEFAULT_BANDS = {
    FreqClass.HIGH: BandSelection(FreqClass.HIGH, 2.0, 10.0),
    FreqClass.LOW: BandSelection(FreqClass.LOW, 1.0, 7.5),
}


@dataclass(frozen=True)
class AtRecord:
    escalator_id: int
    point_id: int
    timestamp: datetime
    at_value: float
    status: Status


def fft_magnitude(
    samples,
    sample_rate_hz: float,
    escalator_id: int = 0,
    point_id: int = 1,
    timestamp: datetime | None = None,
) -> SpectrumRecord:
    """One-sided RMS-amplitude spectrum of a real acceleration series.

    The series is zero-padded to the next power of two, length ``n``. Each bin
    holds the RMS amplitude of its component, so a unit-amplitude tone on a bin
    centre reads ``1/sqrt(2)`` and ``sum(mag**2) == sum(x**2) / n``.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample series")
    if sample_rate_hz < 2 * FULL_RANGE_KHZ * 1000:
        raise ValueError("sample rate must be >= 25.6 kHz to cover 12.8 kHz")
    n = 1 << (x.size - 1).bit_length()
    if n != x.size:
        x = np.concatenate([x, np.zeros(n - x.size)])
    mags = np.abs(np.fft.rfft(x)) / n
    if n > 1:
        mags[1 : n // 2] *= math.sqrt(2.0)
    if timestamp is None:
        timestamp = datetime.fromtimestamp(0, tz=LOCAL_TZ)
    return SpectrumRecord(escalator_id, point_id, timestamp, sample_rate_hz / n, mags)


def _band_slice(spec: SpectrumRecord, lo_khz: float, hi_khz: float) -> slice:
    if not 0 <= lo_khz < hi_khz <= FULL_RANGE_KHZ + 1e-9:
        raise ValueError(f"band [{lo_khz}, {hi_khz}] kHz outside [0, {FULL_RANGE_KHZ}]")
    # Bin k sits at k * bin_hz; the band keeps lo <= f < hi.
    s = math.ceil(lo_khz * 1000 / spec.bin_hz - 1e-9)
    m = math.ceil(hi_khz * 1000 / spec.bin_hz - 1e-9)
    m = min(m, spec.magnitudes.size)
    if m <= s:
        raise ValueError(f"band [{lo_khz}, {hi_khz}] kHz contains no bins")
    return slice(s, m)


def band_rms(spec: SpectrumRecord, lo_khz: float, hi_khz: float) -> float:
    x = spec.magnitudes[_band_slice(spec, lo_khz, hi_khz)]
    return float(np.sqrt(np.mean(x * x)))


def band_edges(width_khz: float = 0.5, full_khz: float = FULL_RANGE_KHZ) -> list[tuple[float, float]]:
    n = math.ceil(full_khz / width_khz - 1e-9)
    return [(round(i * width_khz, 6), round(min((i + 1) * width_khz, full_khz), 6)) for i in range(n)]


def band_rms_row(spec: SpectrumRecord, edges: Sequence[tuple[float, float]]) -> np.ndarray:
    return np.array([band_rms(spec, lo, hi) for lo, hi in edges])


def select_dominant_bands(
    spectra: Sequence[SpectrumRecord],
    freq_class: FreqClass,
    *,
    band_width_khz: float = 0.5,
    score_fraction: float = 0.2,
) -> BandSelection:
    """Pick the dominant frequency band for one component class.

    Each sub-band gets an RMS distribution over the corpus. Its score is the
    median RMS discounted by the share of extreme values (beyond Q3 + 1.5 IQR).
    The answer is the longest contiguous run of sub-bands scoring above
    ``score_fraction`` of the best score, with the 0-0.5 kHz noise band removed.
    """
    if not spectra:
        raise ValueError(f"no spectra for {freq_class.value}")
    edges = band_edges(band_width_khz)
    rms = np.array([band_rms_row(s, edges) for s in spectra])
    return select_from_rms(rms, edges, freq_class, score_fraction=score_fraction)


def select_from_rms(
    rms: np.ndarray,
    edges: Sequence[tuple[float, float]],
    freq_class: FreqClass,
    *,
    score_fraction: float = 0.2,
) -> BandSelection:
    """Band selection from a precomputed (spectra x sub-bands) RMS matrix."""
    rms = np.atleast_2d(np.asarray(rms, dtype=float))
    if rms.shape[0] == 0:
        raise ValueError(f"no spectra for {freq_class.value}")
    q1, med, q3 = np.percentile(rms, [25, 50, 75], axis=0)
    fence = q3 + 1.5 * (q3 - q1)
    extremes = (rms > fence).sum(axis=0)
    scores = med * (1.0 - extremes / rms.shape[0])

    stats = tuple(
        BandStats(lo, hi, float(med[i]), int(extremes[i]), float(scores[i]))
        for i, (lo, hi) in enumerate(edges)
    )
    eligible = [i for i, (lo, _) in enumerate(edges) if lo >= NOISE_BAND_KHZ[1]]
    best = max(scores[i] for i in eligible)
    if best <= 0:
        raise ValueError(f"corpus for {freq_class.value} carries no energy above 0.5 kHz")

    keep = [i for i in eligible if scores[i] > score_fraction * best]
    runs = [[i for _, i in grp] for _, grp in groupby(enumerate(keep), key=lambda t: t[1] - t[0])]
    run = max(runs, key=lambda r: (len(r), sum(scores[i] for i in r)))
    return BandSelection(freq_class, edges[run[0]][0], edges[run[-1]][1], stats)


def classify(at_value: float, row: ThresholdRow) -> Status:
    if at_value >= row.alarm_g:
        return Status.ALARM
    if at_value >= row.alert_g:
        return Status.ALERT
    return Status.NORMAL


def compute_at(
    spec: SpectrumRecord,
    selection: BandSelection,
    thresholds: Mapping[Location, ThresholdRow] | None = None,
) -> AtRecord:
    point = sensor_point(spec.point_id)
    if point.freq_class is not selection.freq_class:
        raise ValueError(
            f"point {spec.point_id} is {point.freq_class.value}, selection is {selection.freq_class.value}"
        )
    thresholds = thresholds or default_thresholds()
    x = spec.magnitudes[_band_slice(spec, selection.band_lo_khz, selection.band_hi_khz)]
    at = math.sqrt(float(np.dot(x, x)) / AT_DIVISOR)
    return AtRecord(spec.escalator_id, spec.point_id, spec.timestamp, at, classify(at, thresholds[point.location]))


DEFAULT_REDUCTION_WINDOWS = (
    (time(6, 0), time(11, 0)),
    (time(11, 0), time(16, 0)),
    (time(16, 0), None),  # None = midnight
)


def daily_at_reduction(
    records: Iterable[AtRecord],
    service_window: ServiceWindow | None = None,
    *,
    windows=DEFAULT_REDUCTION_WINDOWS,
    tz=LOCAL_TZ,
) -> list[AtRecord]:
    """Keep the largest in-service A_t of each reduction window (at most 3 per day).

    Expects records from one escalator-point-day.
    """
    service_window = service_window or ServiceWindow()
    best: dict[int, AtRecord] = {}
    for rec in records:
        local = rec.timestamp.astimezone(tz).time()
        if not service_window.contains(local):
            continue
        for k, (lo, hi) in enumerate(windows):
            if local >= lo and (hi is None or local < hi):
                cur = best.get(k)
                if cur is None or rec.at_value > cur.at_value:
                    best[k] = rec
                break
    return [best[k] for k in sorted(best)]


def reduce_daily(
    records: Iterable[AtRecord],
    service_windows: Mapping[int, ServiceWindow] | None = None,
    *,
    tz=LOCAL_TZ,
) -> list[AtRecord]:
    """Apply the daily reduction to a mixed stream, grouped by escalator, point and local date."""
    service_windows = service_windows or {}

    def key(r: AtRecord):
        return (r.escalator_id, r.point_id, r.timestamp.astimezone(tz).date())

    out: list[AtRecord] = []
    for (esc, _, _), grp in groupby(sorted(records, key=lambda r: (key(r), r.timestamp)), key=key):
        out.extend(daily_at_reduction(grp, service_windows.get(esc), tz=tz))
    return out


def exceedance_curve(at_values, taus) -> np.ndarray:
    """Share of values strictly above each threshold."""
    x = np.sort(np.asarray(at_values, dtype=float))
    if x.size == 0:
        raise ValueError("empty A_t set")
    taus = np.asarray(taus, dtype=float)
    return (x.size - np.searchsorted(x, taus, side="right")) / x.size


def exceedance_area(at_values) -> float:
    """Area under the exceedance curve over [0, max], integrated step by step."""
    x = np.sort(np.asarray(at_values, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty A_t set")
    if x[0] < 0:
        raise ValueError("A_t values must be non-negative")
    # Between consecutive order statistics x[k-1] < tau < x[k], n - k values exceed tau.
    widths = np.diff(x, prepend=0.0)
    heights = (n - np.arange(n)) / n
    return float(np.dot(widths, heights))


def fleet_vibration_status(
    areas: Mapping[int, float],
    weights: Mapping[int, float] | None = None,
    *,
    renormalize: bool = False,
) -> float:
    """Weighted sum of per-sensor exceedance areas, keyed by point id."""
    if weights is None:
        weights = {p.point_id: p.weight for p in SENSOR_POINTS}
    missing = sorted(set(weights) - set(areas))
    if missing and not renormalize:
        raise ValueError(f"missing exceedance areas for sensor points {missing}")
    present = [pid for pid in sorted(weights) if pid in areas]
    if not present:
        raise ValueError("no sensor areas present")
    total_w = sum(weights[pid] for pid in present) if missing else 1.0
    return sum(weights[pid] * areas[pid] for pid in present) / total_w
