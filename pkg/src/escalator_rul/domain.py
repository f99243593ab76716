"""Shared vocabulary: fleet metadata, sensor layout, thresholds and quarters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable

# Hong Kong clock; all service-window logic runs in local time.
LOCAL_TZ = timezone(timedelta(hours=8))

# Date at which the fleet table ages hold. Chosen so that the 18.7-year
# units are 18.05 years old at the end of 2021Q4.
FLEET_REFERENCE_DATE = date(2022, 8, 24)

DAYS_PER_YEAR = 365.25

# A service day runs 04:00 -> 04:00 local.
SERVICE_DAY_START = time(4, 0)
MINUTES_PER_DAY = 1440


class Direction(str, Enum):
    UP = "Up"
    DOWN = "Down"
    BIDIRECTIONAL = "BiDirectional"

    @property
    def is_down(self) -> bool:
        # BiDirectional units follow the upward formulas.
        return self is Direction.DOWN


class Location(str, Enum):
    GEARBOX_DE = "GearboxDE"
    GEARBOX_NDE = "GearboxNDE"
    MOTOR_DE = "MotorDE"
    MOTOR_NDE = "MotorNDE"
    MAIN_DRIVE_DE = "MainDriveDE"
    MAIN_DRIVE_NDE = "MainDriveNDE"
    TENSION_LEFT_DE = "TensionCarriageLeftDE"
    TENSION_RIGHT_NDE = "TensionCarriageRightNDE"


class FreqClass(str, Enum):
    HIGH = "HighFrequency"
    LOW = "LowFrequency"


@dataclass(frozen=True)
class ServiceWindow:
    """Daily scheduled operating interval; ``end`` may fall after midnight."""

    start: time = time(6, 0)
    end: time = time(1, 0)

    def slot_range(self) -> tuple[int, int]:
        """Half-open range of service-day minute slots (0 = 04:00) inside the window."""
        lo = _slot_of(self.start)
        hi = _slot_of(self.end)
        if hi <= lo:
            hi = MINUTES_PER_DAY if self.end == SERVICE_DAY_START else hi
        if hi <= lo:
            raise ValueError(f"service window {self} wraps past 04:00")
        return lo, hi

    def contains(self, local_time: time) -> bool:
        lo, hi = self.slot_range()
        return lo <= _slot_of(local_time) < hi

    def to_json(self) -> list[str]:
        return [self.start.strftime("%H:%M"), self.end.strftime("%H:%M")]

    @classmethod
    def from_json(cls, value: Iterable[str]) -> "ServiceWindow":
        start, end = list(value)
        return cls(time.fromisoformat(start), time.fromisoformat(end))


def _slot_of(t: time) -> int:
    return (t.hour * 60 + t.minute - 4 * 60) % MINUTES_PER_DAY


@dataclass(frozen=True)
class EscalatorMeta:
    id: int
    rise_m: float
    direction: Direction
    age_years: float
    service_window: ServiceWindow = field(default_factory=ServiceWindow)

    def __post_init__(self):
        if not self.rise_m > 0:
            raise ValueError(f"escalator {self.id}: rise_m must be > 0")
        if self.age_years < 0:
            raise ValueError(f"escalator {self.id}: age_years must be >= 0")
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", Direction(self.direction))

    def age_at(self, when: date, reference: date = FLEET_REFERENCE_DATE) -> float:
        """Service age in years on ``when``, anchored at ``reference``."""
        return self.age_years + (when - reference).days / DAYS_PER_YEAR

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "rise_m": self.rise_m,
            "direction": self.direction.value,
            "age_years": self.age_years,
            "service_window": self.service_window.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "EscalatorMeta":
        window = d.get("service_window")
        return cls(
            id=int(d["id"]),
            rise_m=float(d["rise_m"]),
            direction=Direction(d["direction"]),
            age_years=float(d["age_years"]),
            service_window=ServiceWindow.from_json(window) if window else ServiceWindow(),
        )


_FLEET_TABLE = [
    (0, 16.72, "Up", 7), (1, 16.72, "Up", 7),
    (2, 5.5, "Up", 24.2), (3, 5.5, "Down", 24.2),
    (4, 8.926, "Down", 18.7), (5, 8.926, "Down", 18.7),
    (6, 5.6, "Down", 13.1), (7, 5.6, "Up", 13.1),
    (8, 8.28, "Down", 18.7), (9, 8.28, "Down", 18.7),
    (10, 5.88, "Down", 18.7), (11, 5.88, "Up", 18.7),
    (12, 3.567, "Up", 18.7), (13, 3.567, "Down", 18.7),
    (14, 6.79, "Up", 18.7), (15, 6.79, "Down", 18.7),
    (16, 5.35, "BiDirectional", 17.7), (17, 5.35, "BiDirectional", 17.7),
    (18, 8.175, "Up", 18.7), (19, 8.175, "Down", 18.7),
    (20, 6.02, "Down", 18.7), (21, 6.02, "Up", 18.7),
    (22, 7.635, "Up", 18.7), (23, 7.635, "Down", 18.7),
]


def default_fleet() -> list[EscalatorMeta]:
    """The 24 monitored escalators (rise, direction, age at the reference date)."""
    return [
        EscalatorMeta(id=i, rise_m=rise, direction=Direction(d), age_years=float(age))
        for i, rise, d, age in _FLEET_TABLE
    ]


def load_fleet(path: str | Path) -> list[EscalatorMeta]:
    with open(path) as fh:
        return [EscalatorMeta.from_json(d) for d in json.load(fh)]


def dump_fleet(fleet: Iterable[EscalatorMeta]) -> str:
    return json.dumps([m.to_json() for m in fleet], indent=2) + "\n"


@dataclass(frozen=True)
class SensorPoint:
    point_id: int
    location: Location
    freq_class: FreqClass
    weight: float


# Point ids follow the sensor layout table; weights are keyed by location.
SENSOR_POINTS: tuple[SensorPoint, ...] = (
    SensorPoint(1, Location.GEARBOX_DE, FreqClass.HIGH, 0.11),
    SensorPoint(2, Location.GEARBOX_NDE, FreqClass.HIGH, 0.11),
    SensorPoint(3, Location.MOTOR_DE, FreqClass.HIGH, 0.11),
    SensorPoint(4, Location.MOTOR_NDE, FreqClass.HIGH, 0.11),
    SensorPoint(5, Location.MAIN_DRIVE_DE, FreqClass.LOW, 0.17),
    SensorPoint(6, Location.MAIN_DRIVE_NDE, FreqClass.LOW, 0.16),
    SensorPoint(7, Location.TENSION_LEFT_DE, FreqClass.LOW, 0.12),
    SensorPoint(8, Location.TENSION_RIGHT_NDE, FreqClass.LOW, 0.11),
)

POINTS_BY_ID = {p.point_id: p for p in SENSOR_POINTS}


def sensor_point(point_id: int) -> SensorPoint:
    try:
        return POINTS_BY_ID[point_id]
    except KeyError:
        raise ValueError(f"sensor point must be 1..8, got {point_id}") from None


@dataclass(frozen=True)
class ThresholdRow:
    alert_g: float
    alarm_g: float
    alert_mms: float = 2.8
    alarm_mms: float = 4.5

    def __post_init__(self):
        if not (self.alert_g < self.alarm_g and self.alert_mms < self.alarm_mms):
            raise ValueError("alert threshold must be below alarm threshold")


ThresholdTable = dict  # Location -> ThresholdRow


def default_thresholds() -> dict[Location, ThresholdRow]:
    high = ThresholdRow(0.375, 0.75)
    low = ThresholdRow(0.15, 0.3)
    return {
        p.location: high if p.freq_class is FreqClass.HIGH else low
        for p in SENSOR_POINTS
    }


@dataclass(frozen=True, order=True)
class Quarter:
    year: int
    quarter: int

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise ValueError(f"quarter must be 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        """Parse ``2021Q4`` (case-insensitive)."""
        year, sep, q = text.strip().upper().partition("Q")
        if not sep or not year.isdigit() or not q.isdigit():
            raise ValueError(f"bad quarter {text!r}; expected YYYYQN")
        return cls(int(year), int(q))

    @classmethod
    def of(cls, day: date) -> "Quarter":
        return cls(day.year, (day.month - 1) // 3 + 1)

    @property
    def start(self) -> date:
        return date(self.year, 3 * self.quarter - 2, 1)

    @property
    def end(self) -> date:
        """Last day of the quarter (inclusive)."""
        return self.next().start - timedelta(days=1)

    def next(self) -> "Quarter":
        if self.quarter == 4:
            return Quarter(self.year + 1, 1)
        return Quarter(self.year, self.quarter + 1)

    def prev(self) -> "Quarter":
        if self.quarter == 1:
            return Quarter(self.year - 1, 4)
        return Quarter(self.year, self.quarter - 1)

    def days(self) -> list[date]:
        n = (self.end - self.start).days + 1
        return [self.start + timedelta(days=i) for i in range(n)]

    def __contains__(self, day: date) -> bool:
        return self.start <= day <= self.end

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


def to_utc_iso(ts: datetime) -> str:
    """Render an aware timestamp as ``YYYY-MM-DDTHH:MM:SSZ``."""
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_utc_iso(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def service_date_of(ts: datetime, tz=LOCAL_TZ) -> date:
    """Service day of an aware timestamp: local time shifted back four hours."""
    return (ts.astimezone(tz) - timedelta(hours=4)).date()
