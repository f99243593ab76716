"""Minute-level energy processing: service days, fixed/variable loss, passengers, events."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    LOCAL_TZ,
    MINUTES_PER_DAY,
    Direction,
    EscalatorMeta,
    ServiceWindow,
    service_date_of,
)

G = 9.81
PASSENGER_MASS_KG = 75.0
WALK_FACTOR_UP = 0.85
WALK_FACTOR_DOWN = 0.75
SHUTDOWN_WH = 5.0
MIN_EVENT_MINUTES = 10
MAX_MISSING_FRACTION = 0.10


@dataclass(frozen=True)
class EnergyMinute:
    escalator_id: int
    timestamp: datetime
    e_imp_wh: float
    e_exp_wh: float = 0.0
    current_a: float | None = None
    voltage_v: float | None = None

    def __post_init__(self):
        if self.e_imp_wh < 0 or self.e_exp_wh < 0:
            raise ValueError("energy readings must be non-negative")


def total_energy(rec: EnergyMinute) -> float:
    return rec.e_imp_wh + rec.e_exp_wh


class EventKind(str, Enum):
    CORRECTIVE = "Corrective"
    PREVENTIVE = "Preventive"


@dataclass(frozen=True)
class MaintenanceEvent:
    kind: EventKind
    start: datetime
    duration_min: int


@dataclass
class ServiceDayProfile:
    """One service day (04:00 -> 04:00 local) of total energy, NaN where missing."""

    escalator_id: int
    service_date: date
    e_total_wh: np.ndarray
    tz: object = field(default=LOCAL_TZ, repr=False)

    def __post_init__(self):
        self.e_total_wh = np.asarray(self.e_total_wh, dtype=float)
        if self.e_total_wh.shape != (MINUTES_PER_DAY,):
            raise ValueError("a service day holds exactly 1440 minute slots")

    @property
    def start(self) -> datetime:
        return datetime.combine(self.service_date, datetime.min.time(), self.tz) + timedelta(hours=4)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.e_total_wh)

    @property
    def running(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.e_total_wh >= SHUTDOWN_WH

    @property
    def working_minutes(self) -> int:
        return int(self.running.sum())

    def window_mask(self, window: ServiceWindow) -> np.ndarray:
        lo, hi = window.slot_range()
        mask = np.zeros(MINUTES_PER_DAY, dtype=bool)
        mask[lo:hi] = True
        return mask


def regroup_service_day(stream: Iterable[EnergyMinute], tz=LOCAL_TZ) -> list[ServiceDayProfile]:
    """Bucket minute records into service days; slots with no record stay NaN."""
    days: dict[tuple[int, date], np.ndarray] = {}
    for rec in stream:
        local = rec.timestamp.astimezone(tz)
        sd = service_date_of(local, tz)
        key = (rec.escalator_id, sd)
        arr = days.get(key)
        if arr is None:
            arr = days[key] = np.full(MINUTES_PER_DAY, np.nan)
        slot = ((local.hour - 4) % 24) * 60 + local.minute
        if not np.isnan(arr[slot]):
            raise ValueError(f"duplicate minute record for escalator {rec.escalator_id} at {rec.timestamp}")
        arr[slot] = total_energy(rec)
    return [ServiceDayProfile(esc, sd, arr, tz) for (esc, sd), arr in sorted(days.items())]


def _in_service(profile: ServiceDayProfile, window: ServiceWindow) -> np.ndarray:
    return profile.e_total_wh[profile.window_mask(window) & profile.running]


def estimate_fixed_loss(
    profile: ServiceDayProfile, direction: Direction, window: ServiceWindow | None = None
) -> float:
    """No-load consumption per minute from the in-service minutes.

    Load raises readings on upward units and lowers them on downward ones, so
    the 5th (up) or 95th (down) percentile tracks the no-load floor.
    """
    e = _in_service(profile, window or ServiceWindow())
    if e.size == 0:
        raise ValueError(f"escalator {profile.escalator_id} has no working minutes on {profile.service_date}")
    q = 95 if direction.is_down else 5
    return float(np.percentile(e, q, method="lower"))


def decompose_variable_loss(
    profile: ServiceDayProfile,
    fixed_loss: float,
    direction: Direction,
    window: ServiceWindow | None = None,
) -> float:
    """Daily load-dependent energy (Wh), clamped at zero per minute."""
    e = _in_service(profile, window or ServiceWindow())
    v = fixed_loss - e if direction.is_down else e - fixed_loss
    return float(np.clip(v, 0.0, None).sum())


def walking_factor(direction: Direction) -> float:
    return WALK_FACTOR_DOWN if direction.is_down else WALK_FACTOR_UP


def energy_per_passenger_wh(meta: EscalatorMeta) -> float:
    return G * meta.rise_m * PASSENGER_MASS_KG * walking_factor(meta.direction) / 3600.0


def estimate_passengers(variable_loss_wh: float, meta: EscalatorMeta) -> float:
    if variable_loss_wh < 0:
        raise ValueError("variable loss must be non-negative")
    return variable_loss_wh * 3600.0 / (G * meta.rise_m * PASSENGER_MASS_KG * walking_factor(meta.direction))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, length) of each maximal True run."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def detect_events(
    profile: ServiceDayProfile,
    window: ServiceWindow | None = None,
    min_duration: int = MIN_EVENT_MINUTES,
) -> list[MaintenanceEvent]:
    """Shutdowns inside the service window and energised runs outside it."""
    window = window or ServiceWindow()
    e = profile.e_total_wh
    present = ~profile.missing
    in_win = profile.window_mask(window)
    with np.errstate(invalid="ignore"):
        idle = present & (e < SHUTDOWN_WH)
        live = present & (e >= SHUTDOWN_WH)
    events = []
    for kind, mask in ((EventKind.CORRECTIVE, idle & in_win), (EventKind.PREVENTIVE, live & ~in_win)):
        for start, length in _runs(mask):
            if length >= min_duration:
                events.append(MaintenanceEvent(kind, profile.start + timedelta(minutes=start), length))
    events.sort(key=lambda ev: ev.start)
    return events


@dataclass(frozen=True)
class DailyFeatures:
    escalator_id: int
    service_date: date
    working_min: int
    fixed_loss_wh_min: float  # NaN when the unit never ran in service
    variable_loss_wh: float
    passengers: float
    corrective_events: int
    preventive_events: int
    missing_fraction: float

    @property
    def flagged(self) -> bool:
        return self.missing_fraction > MAX_MISSING_FRACTION


def analyze_day(profile: ServiceDayProfile, meta: EscalatorMeta) -> DailyFeatures:
    window = meta.service_window
    in_win = profile.window_mask(window)
    missing_fraction = float(profile.missing[in_win].mean())
    try:
        ef = estimate_fixed_loss(profile, meta.direction, window)
    except ValueError:
        ef, ev, pax = float("nan"), 0.0, 0.0
    else:
        ev = decompose_variable_loss(profile, ef, meta.direction, window)
        pax = estimate_passengers(ev, meta)
    events = detect_events(profile, window)
    return DailyFeatures(
        escalator_id=profile.escalator_id,
        service_date=profile.service_date,
        working_min=profile.working_minutes,
        fixed_loss_wh_min=ef,
        variable_loss_wh=ev,
        passengers=pax,
        corrective_events=sum(e.kind is EventKind.CORRECTIVE for e in events),
        preventive_events=sum(e.kind is EventKind.PREVENTIVE for e in events),
        missing_fraction=missing_fraction,
    )


def analyze_days(profiles: Sequence[ServiceDayProfile], fleet: dict[int, EscalatorMeta]) -> list[DailyFeatures]:
    return [analyze_day(p, fleet[p.escalator_id]) for p in profiles]
