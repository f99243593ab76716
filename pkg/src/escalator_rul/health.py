"""Lifetime health index: quarterly features, normalisation and the exponential reference model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import EscalatorMeta, Quarter
from .energy import DailyFeatures
from .vibration import AtRecord, exceedance_area, fleet_vibration_status


class Variable(str, Enum):
    WORKING_TIME = "T"
    PASSENGER_LOAD = "P"
    FIXED_LOSS_RESIDUAL = "L"
    EXCEEDANCE_AREA = "N"
    FAULT_COUNT = "C"


# (weight, min, max) per variable.
LHI_PARAMETERS = {
    Variable.WORKING_TIME: (0.2, 0.0, 15_330_000.0),
    Variable.PASSENGER_LOAD: (0.2, 0.0, 332_150_000.0),
    Variable.FIXED_LOSS_RESIDUAL: (0.2, 0.0, 19.61),
    Variable.EXCEEDANCE_AREA: (0.3, 0.0, 0.15),
    Variable.FAULT_COUNT: (0.1, 0.0, 33.0),
}

# Pre-monitoring history is filled at 365 operating days per year.
HISTORY_DAYS_PER_YEAR = 365.0


def normalize(raw: float, kind: Variable | str) -> float:
    """Min-max scale with the fleet bounds, clamped to [0, 1]."""
    try:
        _, lo, hi = LHI_PARAMETERS[Variable(kind)]
    except ValueError:
        raise ValueError(f"unknown LHI variable {kind!r}") from None
    if raw < 0:
        raise ValueError(f"raw {Variable(kind).name} must be non-negative")
    return min(1.0, max(0.0, (raw - lo) / (hi - lo)))


def compute_lhi(t: float, p: float, l: float, n: float, c: float) -> float:
    """Weighted sum of the five normalised variables (working time, passengers,
    fixed-loss residual, exceedance area, fault count)."""
    w = [LHI_PARAMETERS[v][0] for v in Variable]
    return w[0] * t + w[1] * p + w[2] * l + w[3] * n + w[4] * c


@dataclass(frozen=True)
class QuarterFeatures:
    escalator_id: int
    quarter: Quarter
    age_years_at_quarter: float
    working_time_raw: float
    passenger_load_raw: float
    fixed_loss_residual_raw: float
    exceedance_area_raw: float
    fault_count_raw: int
    days_used: int = 0
    days_excluded: int = 0

    @property
    def normalized(self) -> tuple[float, float, float, float, float]:
        return (
            normalize(self.working_time_raw, Variable.WORKING_TIME),
            normalize(self.passenger_load_raw, Variable.PASSENGER_LOAD),
            normalize(self.fixed_loss_residual_raw, Variable.FIXED_LOSS_RESIDUAL),
            normalize(self.exceedance_area_raw, Variable.EXCEEDANCE_AREA),
            normalize(self.fault_count_raw, Variable.FAULT_COUNT),
        )

    @property
    def lhi(self) -> float:
        return compute_lhi(*self.normalized)


def baseline_fixed_loss(first_quarter_days: Iterable[DailyFeatures]) -> float:
    """Median daily fixed loss over an escalator's first monitored quarter."""
    values = [d.fixed_loss_wh_min for d in first_quarter_days if not d.flagged and not math.isnan(d.fixed_loss_wh_min)]
    if not values:
        raise ValueError("no usable days to set the fixed-loss baseline")
    return float(np.median(values))


def aggregate_quarter(
    meta: EscalatorMeta,
    quarter: Quarter,
    daily: Sequence[DailyFeatures],
    at_records: Sequence[AtRecord],
    *,
    baseline_ef: float | None = None,
    prior_cumulative: tuple[float, float] | None = None,
    renormalize_missing_sensors: bool = False,
) -> QuarterFeatures:
    """Roll one escalator-quarter into the five raw LHI inputs.

    Working time and passenger load are lifetime totals. Without a prior total
    the pre-monitoring life is extrapolated as age at quarter start times 365
    times the observed daily mean. ``at_records`` should already be reduced to
    at most three per day.
    """
    days = [d for d in daily if d.escalator_id == meta.id and d.service_date in quarter]
    used = [d for d in days if not d.flagged]
    if not used:
        raise ValueError(f"escalator {meta.id} has no usable days in {quarter}")

    work = float(sum(d.working_min for d in used))
    pax = float(sum(d.passengers for d in used))
    if prior_cumulative is None:
        history_days = meta.age_at(quarter.start) * HISTORY_DAYS_PER_YEAR
        prior_t = max(0.0, history_days) * work / len(used)
        prior_p = max(0.0, history_days) * pax / len(used)
    else:
        prior_t, prior_p = prior_cumulative

    ef_days = [d.fixed_loss_wh_min for d in used if not math.isnan(d.fixed_loss_wh_min)]
    if baseline_ef is None:
        baseline_ef = baseline_fixed_loss(used)
    residual = float(np.mean([max(0.0, ef - baseline_ef) for ef in ef_days])) if ef_days else 0.0

    by_point: dict[int, list[float]] = {}
    for r in at_records:
        if r.escalator_id == meta.id:
            by_point.setdefault(r.point_id, []).append(r.at_value)
    areas = {pid: exceedance_area(v) for pid, v in by_point.items()}
    n_status = fleet_vibration_status(areas, renormalize=renormalize_missing_sensors)

    return QuarterFeatures(
        escalator_id=meta.id,
        quarter=quarter,
        age_years_at_quarter=meta.age_at(quarter.end),
        working_time_raw=prior_t + work,
        passenger_load_raw=prior_p + pax,
        fixed_loss_residual_raw=residual,
        exceedance_area_raw=n_status,
        fault_count_raw=sum(d.corrective_events for d in used),
        days_used=len(used),
        days_excluded=len(days) - len(used),
    )


class ModelFitError(ValueError):
    pass


@dataclass(frozen=True)
class FitPoint:
    escalator_id: int
    label: str  # e.g. the quarter
    age: float
    lhi: float


@dataclass(frozen=True)
class LhiModel:
    a: float
    b: float
    t_end_years: float = 35.0
    fitted_on: tuple[tuple[int, str], ...] = ()
    excluded: tuple[int, ...] = ()

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ModelFitError(f"reference model needs a > 0 and b > 0 (got a={self.a}, b={self.b})")

    @property
    def y_end(self) -> float:
        return self(self.t_end_years)

    def __call__(self, t):
        if np.ndim(t):
            return self.a * np.exp(self.b * np.asarray(t, dtype=float))
        return self.a * math.exp(self.b * t)

    def inverse(self, y: float) -> float:
        if y <= 0:
            raise ValueError(f"LHI must be positive, got {y}")
        return math.log(y / self.a) / self.b

    def with_t_end(self, t_end: float) -> "LhiModel":
        return LhiModel(self.a, self.b, t_end, self.fitted_on, self.excluded)

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "t_end_years": self.t_end_years,
            "y_end": self.y_end,
            "fitted_on": [{"escalator_id": e, "quarter": q} for e, q in self.fitted_on],
            "excluded": list(self.excluded),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "LhiModel":
        return cls(
            a=float(d["a"]),
            b=float(d["b"]),
            t_end_years=float(d.get("t_end_years", 35.0)),
            fitted_on=tuple((int(p["escalator_id"]), str(p["quarter"])) for p in d.get("fitted_on", ())),
            excluded=tuple(int(e) for e in d.get("excluded", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LhiModel":
        return cls.from_json(json.loads(Path(path).read_text()))


DEFAULT_MODEL = LhiModel(a=0.0928, b=0.0665, t_end_years=35.0)


def _loglinear(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    ly = np.log(y)
    tm, lm = t.mean(), ly.mean()
    sxx = np.sum((t - tm) ** 2)
    if sxx == 0:
        raise ModelFitError("all fit points share one age; slope undefined")
    b = float(np.sum((t - tm) * (ly - lm)) / sxx)
    return float(math.exp(lm - b * tm)), b


def fit_reference_model(
    points: Sequence[FitPoint],
    *,
    exclude: Iterable[int] = (),
    auto_exclude: int = 0,
    t_end_years: float = 35.0,
) -> LhiModel:
    """Least-squares fit of ln(lhi) = ln(a) + b * age.

    Escalators in ``exclude`` are dropped up front. With ``auto_exclude = k``
    a first pass flags the k points with the largest absolute log residual
    and the fit is repeated without them.
    """
    excluded = set(exclude)
    pts = [p for p in points if p.escalator_id not in excluded]
    if any(p.lhi <= 0 for p in pts):
        raise ModelFitError("LHI values must be positive for a log-space fit")
    if len(pts) - auto_exclude < 3:
        raise ModelFitError(f"need at least 3 fit points, have {len(pts) - auto_exclude}")

    t = np.array([p.age for p in pts])
    y = np.array([p.lhi for p in pts])
    if auto_exclude:
        a, b = _loglinear(t, y)
        resid = np.abs(np.log(y) - (math.log(a) + b * t))
        drop = set(np.argsort(-resid, kind="stable")[:auto_exclude].tolist())
        excluded |= {pts[i].escalator_id for i in drop}
        keep = [i for i in range(len(pts)) if i not in drop]
        pts = [pts[i] for i in keep]
        t, y = t[keep], y[keep]

    a, b = _loglinear(t, y)
    return LhiModel(
        a=a,
        b=b,
        t_end_years=t_end_years,
        fitted_on=tuple((p.escalator_id, p.label) for p in pts),
        excluded=tuple(sorted(excluded)),
    )
