"""Seedable synthetic fleet: minute energy data and sensor spectra with known ground truth.

Every random draw comes from a generator keyed on (seed, escalator, day, stream),
so output does not depend on generation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np

from .domain import (
    LOCAL_TZ,
    MINUTES_PER_DAY,
    EscalatorMeta,
    FreqClass,
    default_fleet,
    dump_fleet,
    sensor_point,
    to_utc_iso,
)
from .energy import EnergyMinute, ServiceDayProfile, energy_per_passenger_wh
from .vibration import DEFAULT_BANDS, FULL_RANGE_KHZ, SpectrumRecord

# Relative passenger intensity per local clock hour; rush peaks at 09, 14 and 19.
# The first and last service hours carry no passengers (units run empty).
DEFAULT_HOURLY_PROFILE = (
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    1.4, 2.2, 1.2, 1.0, 1.0, 1.2, 1.8, 1.1,
    1.0, 1.1, 1.4, 2.0, 1.2, 1.0, 0.9, 0.8,
)

# Down units never shed more than this share of the fixed loss, so loaded
# minutes stay well clear of the shutdown threshold.
MAX_DOWN_LOAD_SHARE = 0.8


class InjectedKind(str, Enum):
    CORRECTIVE_SHUTDOWN = "CorrectiveShutdown"
    PREVENTIVE_NIGHT = "PreventiveNight"


@dataclass(frozen=True)
class InjectedEvent:
    date: date
    escalator: int
    kind: InjectedKind
    duration_min: int
    start: time | None = None  # local clock; defaults to 10:00 / 02:00

    def __post_init__(self):
        if self.duration_min <= 0:
            raise ValueError("event duration must be positive")

    def start_slot(self) -> int:
        t = self.start or (time(10, 0) if self.kind is InjectedKind.CORRECTIVE_SHUTDOWN else time(2, 0))
        return (t.hour * 60 + t.minute - 240) % MINUTES_PER_DAY


def _default_passengers(meta: EscalatorMeta) -> float:
    return 10000.0 + 1000.0 * (meta.id % 10)


def _default_fixed_loss(meta: EscalatorMeta) -> float:
    if meta.direction.is_down:
        return 30.0 + 2.0 * meta.rise_m
    return 40.0 + 2.5 * meta.rise_m


@dataclass
class SimConfig:
    seed: int = 0
    fleet: list[EscalatorMeta] = field(default_factory=default_fleet)
    start: date = date(2021, 10, 1)
    end: date = date(2021, 12, 31)
    hourly_profile: tuple[float, ...] = DEFAULT_HOURLY_PROFILE
    daily_passengers: dict[int, float] = field(default_factory=dict)
    fixed_loss_wh_per_min: dict[int, float] = field(default_factory=dict)
    fixed_loss_drift_per_year: float = 0.0
    degradation: dict[int, tuple[float, float]] = field(default_factory=dict)
    injected_events: list[InjectedEvent] = field(default_factory=list)
    random_fault_rate: float = 0.0
    noise: float = 0.02
    regen_fraction: float = 0.15
    spectrum_bins: int = 1280
    spectra_per_day: int = 4
    vibration_every_days: int = 1
    spike_probability: float = 0.02

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("simulation start must not be after end")
        if len(self.hourly_profile) != 24 or min(self.hourly_profile) < 0:
            raise ValueError("hourly profile needs 24 non-negative intensities")
        if any(v < 0 for v in self.daily_passengers.values()):
            raise ValueError("passenger intensities must be non-negative")
        self._by_id = {m.id: m for m in self.fleet}

    def meta(self, escalator_id: int) -> EscalatorMeta:
        try:
            return self._by_id[escalator_id]
        except KeyError:
            raise ValueError(f"unknown escalator id {escalator_id}") from None

    def passengers_for(self, escalator_id: int) -> float:
        return self.daily_passengers.get(escalator_id, _default_passengers(self.meta(escalator_id)))

    def fixed_loss_for(self, escalator_id: int, day: date) -> float:
        base = self.fixed_loss_wh_per_min.get(escalator_id, _default_fixed_loss(self.meta(escalator_id)))
        return base + self.fixed_loss_drift_per_year * (day - self.start).days / 365.25

    def degradation_for(self, escalator_id: int) -> tuple[float, float]:
        return self.degradation.get(escalator_id, (0.015, 0.09))

    def dates(self) -> list[date]:
        return [self.start + timedelta(days=i) for i in range((self.end - self.start).days + 1)]

    @property
    def bin_hz(self) -> float:
        return FULL_RANGE_KHZ * 1000 / self.spectrum_bins

    @classmethod
    def from_json(cls, d: dict, fleet: list[EscalatorMeta] | None = None) -> "SimConfig":
        fleet = fleet or default_fleet()
        if d.get("fleet"):
            fleet = [EscalatorMeta.from_json(m) for m in d["fleet"]]
        if d.get("escalators") is not None:
            keep = set(d["escalators"])
            fleet = [m for m in fleet if m.id in keep]
        kw = {}
        for key in ("seed", "random_fault_rate", "noise", "regen_fraction", "spectrum_bins",
                    "spectra_per_day", "vibration_every_days", "spike_probability",
                    "fixed_loss_drift_per_year"):
            if key in d:
                kw[key] = d[key]
        if "start" in d:
            kw["start"] = date.fromisoformat(d["start"])
        if "end" in d:
            kw["end"] = date.fromisoformat(d["end"])
        if "hourly_profile" in d:
            kw["hourly_profile"] = tuple(float(v) for v in d["hourly_profile"])
        if "daily_passengers" in d:
            kw["daily_passengers"] = {int(k): float(v) for k, v in d["daily_passengers"].items()}
        if "fixed_loss_wh_per_min" in d:
            kw["fixed_loss_wh_per_min"] = {int(k): float(v) for k, v in d["fixed_loss_wh_per_min"].items()}
        if "degradation" in d:
            kw["degradation"] = {int(k): (float(v[0]), float(v[1])) for k, v in d["degradation"].items()}
        kw["injected_events"] = [
            InjectedEvent(
                date=date.fromisoformat(e["date"]),
                escalator=int(e["escalator"]),
                kind=InjectedKind(e["kind"]),
                duration_min=int(e["duration_min"]),
                start=time.fromisoformat(e["start"]) if e.get("start") else None,
            )
            for e in d.get("injected_events", ())
        ]
        return cls(fleet=fleet, **kw)


@dataclass(frozen=True)
class TrueEvent:
    kind: str  # "Corrective" or "Preventive", matching energy.EventKind values
    start: datetime
    duration_min: int


@dataclass(frozen=True)
class DayTruth:
    fixed_loss_wh_per_min: float
    passengers: int
    variable_energy_wh: float
    events: tuple[TrueEvent, ...]

    def to_json(self) -> dict:
        return {
            "fixed_loss_wh_per_min": self.fixed_loss_wh_per_min,
            "passengers": self.passengers,
            "variable_energy_wh": self.variable_energy_wh,
            "events": [
                {"kind": e.kind, "start": e.start.isoformat(), "duration_min": e.duration_min}
                for e in self.events
            ],
        }


@dataclass(frozen=True, eq=False)
class EnergyDay:
    """One synthetic service day in columnar form (slot 0 = 04:00 local)."""

    escalator_id: int
    service_date: date
    e_imp_wh: np.ndarray
    e_exp_wh: np.ndarray
    truth: DayTruth

    @property
    def start(self) -> datetime:
        return datetime.combine(self.service_date, time(4, 0), LOCAL_TZ)

    @property
    def e_total_wh(self) -> np.ndarray:
        return self.e_imp_wh + self.e_exp_wh

    def __len__(self) -> int:
        return MINUTES_PER_DAY

    def records(self) -> list[EnergyMinute]:
        t0 = self.start
        return [
            EnergyMinute(self.escalator_id, t0 + timedelta(minutes=i), float(imp), float(exp))
            for i, (imp, exp) in enumerate(zip(self.e_imp_wh, self.e_exp_wh))
        ]

    def profile(self) -> ServiceDayProfile:
        return ServiceDayProfile(self.escalator_id, self.service_date, self.e_total_wh)


def _rng(cfg: SimConfig, *keys: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFF, *keys])


def _hours_of_slots() -> np.ndarray:
    return (4 + np.arange(MINUTES_PER_DAY) // 60) % 24


def generate_energy_day(cfg: SimConfig, escalator_id: int, day: date) -> EnergyDay:
    meta = cfg.meta(escalator_id)
    if not cfg.start <= day <= cfg.end:
        raise ValueError(f"{day} outside simulation range {cfg.start}..{cfg.end}")
    rng = _rng(cfg, escalator_id, day.toordinal(), 1)

    lo, hi = meta.service_window.slot_range()
    in_win = np.zeros(MINUTES_PER_DAY, dtype=bool)
    in_win[lo:hi] = True

    weights = np.asarray(cfg.hourly_profile, dtype=float)[_hours_of_slots()] * in_win
    day_mean = cfg.passengers_for(escalator_id) * rng.uniform(0.85, 1.15)
    lam = weights * (day_mean / weights.sum()) if weights.sum() > 0 else weights
    pax = rng.poisson(lam)

    ef = cfg.fixed_loss_for(escalator_id, day)
    epp = energy_per_passenger_wh(meta)
    if meta.direction.is_down:
        pax = np.minimum(pax, math.floor(MAX_DOWN_LOAD_SHARE * ef / epp))

    # Events: injected first, then random faults on days without an injected one.
    events: list[tuple[str, int, int]] = []
    for ev in cfg.injected_events:
        if ev.escalator == escalator_id and ev.date == day:
            kind = "Corrective" if ev.kind is InjectedKind.CORRECTIVE_SHUTDOWN else "Preventive"
            events.append((kind, ev.start_slot(), ev.duration_min))
    if cfg.random_fault_rate > 0:
        kinds = {k for k, _, _ in events}
        if "Corrective" not in kinds and rng.random() < cfg.random_fault_rate:
            dur = int(rng.integers(15, 121))
            events.append(("Corrective", int(rng.integers(lo + 30, hi - dur - 30)), dur))
        if "Preventive" not in kinds and rng.random() < cfg.random_fault_rate / 2:
            dur = int(rng.integers(15, 91))
            events.append(("Preventive", int(rng.integers(hi + 5, MINUTES_PER_DAY - dur)), dur))

    shutdown = np.zeros(MINUTES_PER_DAY, dtype=bool)
    energised = np.zeros(MINUTES_PER_DAY, dtype=bool)
    for kind, s, dur in events:
        (shutdown if kind == "Corrective" else energised)[s : s + dur] = True
    shutdown &= in_win
    energised &= ~in_win

    pax = np.where(shutdown, 0, pax)
    v = pax * epp
    running = (in_win & ~shutdown) | energised
    sign = -1.0 if meta.direction.is_down else 1.0
    e_t = np.where(running, ef + sign * np.where(in_win, v, 0.0), 0.0)
    e_t = e_t * (1.0 + rng.uniform(-cfg.noise, cfg.noise, MINUTES_PER_DAY)) if cfg.noise else e_t
    # Stopped minutes read a trickle well under the 5 Wh shutdown line.
    e_t = np.where(shutdown, rng.uniform(0.0, 1.0, MINUTES_PER_DAY), e_t)

    e_exp = cfg.regen_fraction * v * running if meta.direction.is_down else np.zeros(MINUTES_PER_DAY)
    e_imp = e_t - e_exp

    t0 = datetime.combine(day, time(4, 0), LOCAL_TZ)
    true_events = tuple(
        TrueEvent(kind, t0 + timedelta(minutes=s), dur)
        for kind, s, dur in sorted(events, key=lambda e: e[1])
    )
    truth = DayTruth(
        fixed_loss_wh_per_min=ef,
        passengers=int(pax[running & in_win].sum()),
        variable_energy_wh=float(v[running & in_win].sum()),
        events=true_events,
    )
    return EnergyDay(escalator_id, day, e_imp, e_exp, truth)


def _class_envelope(freqs_hz: np.ndarray, freq_class: FreqClass) -> np.ndarray:
    band = DEFAULT_BANDS[freq_class]
    lo, hi = band.band_lo_khz * 1000, band.band_hi_khz * 1000
    env = np.where((freqs_hz >= lo) & (freqs_hz < hi), 1.0, 0.06)
    env[freqs_hz < 500] = 0.3
    return env


def generate_spectrum(cfg: SimConfig, escalator_id: int, point_id: int, timestamp: datetime) -> SpectrumRecord:
    """Magnitude spectrum whose in-band A_t tracks the unit's degradation curve."""
    meta = cfg.meta(escalator_id)
    point = sensor_point(point_id)
    rng = _rng(cfg, escalator_id, point_id, int(timestamp.timestamp()), 2)

    a, b = cfg.degradation_for(escalator_id)
    level = a * math.exp(b * meta.age_at(timestamp.astimezone(LOCAL_TZ).date()))
    n = cfg.spectrum_bins
    freqs = np.arange(n) * cfg.bin_hz

    shape = _class_envelope(freqs, point.freq_class) * rng.uniform(0.5, 1.5, n)
    noisy = freqs < 500
    if rng.random() < 0.4:
        idx = rng.choice(np.flatnonzero(noisy), size=int(rng.integers(1, 6)), replace=False)
        shape[idx] *= rng.uniform(5.0, 30.0, idx.size)

    band = DEFAULT_BANDS[point.freq_class]
    in_band = (freqs >= band.band_lo_khz * 1000) & (freqs < band.band_hi_khz * 1000)
    shape /= math.sqrt(np.sum(shape[in_band] ** 2) / 1.5)

    factor = rng.uniform(0.8, 1.2)
    if rng.random() < cfg.spike_probability:
        factor *= rng.uniform(2.5, 4.0)
    return SpectrumRecord(escalator_id, point_id, timestamp, cfg.bin_hz, level * factor * shape)


def spectrum_times(cfg: SimConfig, escalator_id: int, day: date) -> list[datetime]:
    """Sampling instants for one calendar day: one per reduction window, then one at night."""
    if (day - cfg.start).days % cfg.vibration_every_days:
        return []
    rng = _rng(cfg, escalator_id, day.toordinal(), 3)
    slots = [(6 * 60, 11 * 60), (11 * 60, 16 * 60), (16 * 60, 24 * 60)]
    minutes = [int(rng.integers(lo, hi)) for lo, hi in slots]
    minutes.append(3 * 60)  # out of service
    while len(minutes) < cfg.spectra_per_day:
        lo, hi = slots[len(minutes) % 3]
        minutes.append(int(rng.integers(lo, hi)))
    t0 = datetime.combine(day, time(0, 0), LOCAL_TZ)
    return sorted(t0 + timedelta(minutes=m) for m in minutes[: cfg.spectra_per_day])


def iter_spectra(cfg: SimConfig, escalator_id: int, day: date) -> Iterator[SpectrumRecord]:
    for ts in spectrum_times(cfg, escalator_id, day):
        for pid in range(1, 9):
            yield generate_spectrum(cfg, escalator_id, pid, ts)


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def write_raw(cfg: SimConfig, out_dir: str | Path) -> dict:
    """Write the raw drop layout: fleet.json, energy/, vibration/ and truth/ sidecars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fleet.json").write_text(dump_fleet(cfg.fleet))
    counts = {"energy_rows": 0, "spectra": 0}
    for meta in cfg.fleet:
        for day in cfg.dates():
            ed = generate_energy_day(cfg, meta.id, day)
            path = out / "energy" / str(meta.id) / f"{day.isoformat()}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            lines = ["escalator_id,timestamp_utc,e_imp_wh,e_exp_wh"]
            t0 = ed.start
            for i in range(MINUTES_PER_DAY):
                ts = to_utc_iso(t0 + timedelta(minutes=i))
                lines.append(f"{meta.id},{ts},{_fmt(ed.e_imp_wh[i])},{_fmt(ed.e_exp_wh[i])}")
            path.write_text("\n".join(lines) + "\n")
            counts["energy_rows"] += MINUTES_PER_DAY

            tpath = out / "truth" / str(meta.id) / f"{day.isoformat()}.json"
            tpath.parent.mkdir(parents=True, exist_ok=True)
            tpath.write_text(json.dumps(ed.truth.to_json(), indent=1) + "\n")

            by_point: dict[int, list[str]] = {}
            for spec in iter_spectra(cfg, meta.id, day):
                by_point.setdefault(spec.point_id, []).append(spectrum_to_jsonl(spec))
            for pid, rows in by_point.items():
                vpath = out / "vibration" / str(meta.id) / str(pid) / f"{day.isoformat()}.jsonl"
                vpath.parent.mkdir(parents=True, exist_ok=True)
                vpath.write_text("\n".join(rows) + "\n")
                counts["spectra"] += len(rows)
    return counts


def spectrum_to_jsonl(spec: SpectrumRecord) -> str:
    mags = ",".join(f"{m:.6g}" for m in spec.magnitudes)
    return (
        f'{{"escalator_id": {spec.escalator_id}, "point_id": {spec.point_id}, '
        f'"timestamp_utc": "{to_utc_iso(spec.timestamp)}", "bin_hz": {spec.bin_hz!r}, '
        f'"magnitudes": [{mags}]}}'
    )
