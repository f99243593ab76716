"""Pipeline stages over a store: bands -> features -> fit -> rul."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import FreqClass, Quarter, sensor_point
from .energy import analyze_days
from .health import (
    DEFAULT_MODEL,
    FitPoint,
    LhiModel,
    QuarterFeatures,
    aggregate_quarter,
    baseline_fixed_loss,
    fit_reference_model,
)
from .rul import remaining_useful_life
from .store import RUL_COLUMNS, Store, StoreError, _csv_text
from .vibration import (
    DEFAULT_BANDS,
    BandSelection,
    band_edges,
    band_rms_row,
    compute_at,
    reduce_daily,
    select_from_rms,
)

log = logging.getLogger(__name__)


def run_bands(store: Store, *, band_width_khz: float = 0.5, score_fraction: float = 0.2) -> dict[FreqClass, BandSelection]:
    """Select dominant bands per component class from every stored spectrum."""
    edges = band_edges(band_width_khz)
    rows: dict[FreqClass, list[np.ndarray]] = {fc: [] for fc in FreqClass}
    for esc in store.escalators("raw_vibration"):
        for spec in store.query("raw_vibration", esc):
            rows[sensor_point(spec.point_id).freq_class].append(band_rms_row(spec, edges))
    selections = {}
    for fc, r in rows.items():
        if not r:
            raise StoreError(f"no {fc.value} spectra in store; cannot select bands")
        selections[fc] = select_from_rms(np.array(r), edges, fc, score_fraction=score_fraction)
    store.save_bands(selections)
    return selections


@dataclass
class FeaturesResult:
    quarter: Quarter
    features: list[QuarterFeatures] = field(default_factory=list)
    skipped: dict[int, str] = field(default_factory=dict)


def run_features(store: Store, quarter: Quarter, *, renormalize_missing_sensors: bool = False) -> FeaturesResult:
    """Daily energy features, reduced A_t records and quarterly LHI inputs for one quarter."""
    bands = store.load_bands()
    if bands is None:
        raise StoreError("no bands.json in store; run `bands` first")
    fleet = store.fleet_by_id()
    result = FeaturesResult(quarter)
    span = (quarter.start, quarter.end)

    prior_rows = {}
    try:
        prior_rows = {int(r["escalator_id"]): r for r in store.read_quarter(quarter.prev())}
    except StoreError:
        pass

    for esc in store.escalators("raw_energy"):
        meta = fleet.get(esc)
        if meta is None:
            result.skipped[esc] = "not in fleet metadata"
            continue
        profiles = store.profiles(esc, span)
        if not profiles:
            continue
        daily = analyze_days(profiles, fleet)
        store.write_daily(daily)

        first_q = Quarter.of(store.energy_dates(esc)[0])
        if first_q == quarter:
            baseline_days = daily
        else:
            baseline_days = [d for d in store.read_daily(esc) if d.service_date in first_q]
            if not baseline_days:
                baseline_days = analyze_days(store.profiles(esc, (first_q.start, first_q.end)), fleet)
                store.write_daily(baseline_days)

        at = []
        for spec in store.query("raw_vibration", esc, span):
            sel = bands.get(sensor_point(spec.point_id).freq_class, DEFAULT_BANDS[sensor_point(spec.point_id).freq_class])
            at.append(compute_at(spec, sel))
        reduced = reduce_daily(at, {esc: meta.service_window}, tz=store.tz)
        store.write_at(reduced)

        prior = None
        if esc in prior_rows:
            prior = (float(prior_rows[esc]["working_time_raw"]), float(prior_rows[esc]["passenger_load_raw"]))
        try:
            qf = aggregate_quarter(
                meta,
                quarter,
                daily,
                reduced,
                baseline_ef=baseline_fixed_loss(baseline_days),
                prior_cumulative=prior,
                renormalize_missing_sensors=renormalize_missing_sensors,
            )
        except ValueError as exc:
            result.skipped[esc] = str(exc)
            log.warning("escalator %s skipped for %s: %s", esc, quarter, exc)
            continue
        result.features.append(qf)

    if result.features:
        store.write_quarter(quarter, result.features)
    return result


def fit_points(store: Store) -> list[FitPoint]:
    points = []
    for q in store.quarters():
        for r in store.read_quarter(q):
            points.append(FitPoint(int(r["escalator_id"]), str(q), float(r["actual_age"]), float(r["lhi"])))
    return points


def run_fit(
    store: Store,
    out: str | Path,
    *,
    t_end_years: float = 35.0,
    exclude=(),
    auto_exclude: int = 0,
) -> LhiModel:
    model = fit_reference_model(
        fit_points(store), exclude=exclude, auto_exclude=auto_exclude, t_end_years=t_end_years
    )
    store.save_model(out, model)
    return model


def resolve_model(store: Store, spec: str, t_end_years: float | None = None) -> LhiModel:
    """``default`` names the bundled reference model; anything else is a model file path."""
    if spec == "default":
        model = DEFAULT_MODEL
    else:
        path = Path(spec)
        if not path.exists():
            path = store.resolve(spec)
        if not path.exists():
            raise StoreError(f"model file {spec} not found")
        model = LhiModel.load(path)
    return model.with_t_end(t_end_years) if t_end_years is not None else model


def _f4(x: float) -> str:
    return f"{x:.4f}"


def run_rul(store: Store, model: LhiModel, quarter: Quarter) -> str:
    """RUL table for a quarter as CSV text; also kept in the store with the model used."""
    rows = []
    for r in sorted(store.read_quarter(quarter), key=lambda r: int(r["escalator_id"])):
        res = remaining_useful_life(
            float(r["lhi"]), float(r["actual_age"]), model,
            escalator_id=int(r["escalator_id"]), quarter=str(quarter),
        )
        rows.append(
            [r["escalator_id"], str(quarter.year), str(quarter.quarter),
             _f4(res.actual_age), _f4(res.years_till_end), _f4(res.rul_years), _f4(res.lhi_used),
             _f4(float(r["working_hours"])), _f4(float(r["passenger_load"])), _f4(float(r["at_areas"])),
             _f4(float(r["fixed_loss_residual"])), _f4(float(r["fault_counts"]))]
        )
    text = _csv_text(RUL_COLUMNS, rows)
    store.write_rul(quarter, text)
    store.save_model(f"models/rul_{quarter}.json", model)
    return text
