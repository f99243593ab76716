"""Remaining useful life from an LHI value and the fleet reference model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .health import LhiModel


@dataclass(frozen=True)
class RulResult:
    escalator_id: int
    quarter: str
    actual_age: float
    estimated_age: float
    rul_years: float
    end_age_years: float
    lhi_used: float
    t_end_years: float = 35.0

    @property
    def years_till_end(self) -> float:
        return self.t_end_years - self.actual_age


def estimated_age(y: float, model: LhiModel) -> float:
    """Condition-equivalent age: where the reference curve reaches ``y``.

    Negative when the unit is healthier than a new reference unit.
    """
    return model.inverse(y)


def remaining_useful_life(
    y: float,
    actual_age: float,
    model: LhiModel,
    *,
    escalator_id: int = -1,
    quarter: str = "",
) -> RulResult:
    if actual_age < 0:
        raise ValueError("actual age must be non-negative")
    t_hat = estimated_age(y, model)
    rul = model.t_end_years - t_hat
    return RulResult(
        escalator_id=escalator_id,
        quarter=quarter,
        actual_age=actual_age,
        estimated_age=t_hat,
        rul_years=rul,
        end_age_years=actual_age + rul,
        lhi_used=y,
        t_end_years=model.t_end_years,
    )


def shifted_curve(
    y: float, actual_age: float, model: LhiModel, sample_ages: Sequence[float]
) -> list[tuple[float, float]]:
    """Reference curve slid along the age axis to pass through (actual_age, y).

    Samples beyond the end-of-life age are dropped and the curve is closed at
    exactly that age, so its last point is (actual_age + rul, y_end).
    """
    delta = actual_age - estimated_age(y, model)
    end_age = model.inverse(model.y_end) + delta
    pts = [(t, model.a * math.exp(model.b * (t - delta))) for t in sample_ages if t < end_age]
    pts.append((end_age, model.y_end))
    return pts
