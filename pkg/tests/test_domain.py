from datetime import date, datetime, time, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from escalator_rul.domain import (
    FLEET_REFERENCE_DATE,
    LOCAL_TZ,
    SENSOR_POINTS,
    Direction,
    EscalatorMeta,
    FreqClass,
    Location,
    Quarter,
    ServiceWindow,
    ThresholdRow,
    default_fleet,
    default_thresholds,
    dump_fleet,
    load_fleet,
    parse_utc_iso,
    sensor_point,
    service_date_of,
    to_utc_iso,
)


def test_default_fleet_first_row():
    e = default_fleet()[0]
    assert (e.id, e.rise_m, e.direction, e.age_years) == (0, 16.72, Direction.UP, 7)


def test_default_fleet_shape():
    fleet = default_fleet()
    assert len(fleet) == 24
    assert [e.id for e in fleet] == list(range(24))
    assert fleet[16].direction is Direction.BIDIRECTIONAL


def test_meta_validation():
    with pytest.raises(ValueError):
        EscalatorMeta(0, 0.0, Direction.UP, 1.0)
    with pytest.raises(ValueError):
        EscalatorMeta(0, 5.0, Direction.UP, -1.0)
    with pytest.raises(ValueError):
        EscalatorMeta(0, 5.0, "Sideways", 1.0)


def test_fleet_json_round_trip(tmp_path):
    path = tmp_path / "fleet.json"
    path.write_text(dump_fleet(default_fleet()))
    assert load_fleet(path) == default_fleet()


def test_fleet_json_field_names(tmp_path):
    import json

    rows = json.loads(dump_fleet(default_fleet()[:1]))
    assert set(rows[0]) == {"id", "rise_m", "direction", "age_years", "service_window"}


def test_age_anchor_reproduces_quarter_age():
    # 18.7 years at the reference date is 18.05 years at the end of 2021
    e = EscalatorMeta(4, 10.0, Direction.UP, 18.7)
    assert e.age_at(date(2021, 12, 31)) == pytest.approx(18.05, abs=0.005)
    assert e.age_at(FLEET_REFERENCE_DATE) == 18.7


def test_sensor_weights_sum_exactly():
    from decimal import Decimal

    assert sum(Decimal(str(p.weight)) for p in SENSOR_POINTS) == Decimal("1.00")


def test_sensor_points_layout():
    assert [p.point_id for p in SENSOR_POINTS] == list(range(1, 9))
    for p in SENSOR_POINTS:
        gear_or_motor = p.location.value.startswith(("Gearbox", "Motor"))
        assert (p.freq_class is FreqClass.HIGH) == gear_or_motor
    assert len({p.location for p in SENSOR_POINTS}) == 8
    with pytest.raises(ValueError):
        sensor_point(9)


def test_weights_by_location():
    w = {p.location: p.weight for p in SENSOR_POINTS}
    assert w[Location.GEARBOX_DE] == 0.11
    assert w[Location.MAIN_DRIVE_DE] == 0.17
    assert w[Location.MAIN_DRIVE_NDE] == 0.16
    assert w[Location.TENSION_LEFT_DE] == 0.12


def test_default_thresholds():
    t = default_thresholds()
    assert set(t) == set(Location)
    assert t[Location.GEARBOX_DE] == ThresholdRow(0.375, 0.75, 2.8, 4.5)
    assert t[Location.TENSION_RIGHT_NDE] == ThresholdRow(0.15, 0.3, 2.8, 4.5)


def test_threshold_order_enforced():
    with pytest.raises(ValueError):
        ThresholdRow(0.5, 0.4)


def test_quarter_parse_and_bounds():
    q = Quarter.parse("2021Q4")
    assert (q.year, q.quarter) == (2021, 4)
    assert q.start == date(2021, 10, 1) and q.end == date(2021, 12, 31)
    assert len(q.days()) == 92
    assert str(q.next()) == "2022Q1" and str(q.prev()) == "2021Q3"
    assert date(2021, 11, 5) in q and date(2022, 1, 1) not in q
    with pytest.raises(ValueError):
        Quarter.parse("2021Q5")


@given(st.integers(1990, 2100), st.integers(1, 4), st.integers(1990, 2100), st.integers(1, 4))
def test_quarter_ordering_matches_dates(y1, q1, y2, q2):
    a, b = Quarter(y1, q1), Quarter(y2, q2)
    assert (a < b) == (a.start < b.start)


def test_service_window_slots():
    w = ServiceWindow()
    assert w.slot_range() == (120, 1260)
    assert w.contains(time(6, 0)) and w.contains(time(0, 59))
    assert not w.contains(time(1, 0)) and not w.contains(time(5, 59))


def test_service_date_boundaries():
    assert service_date_of(datetime(2021, 1, 2, 3, 59, tzinfo=LOCAL_TZ)) == date(2021, 1, 1)
    assert service_date_of(datetime(2021, 1, 2, 4, 0, tzinfo=LOCAL_TZ)) == date(2021, 1, 2)


def test_utc_iso_round_trip():
    ts = datetime(2021, 10, 1, 4, 0, tzinfo=LOCAL_TZ)
    text = to_utc_iso(ts)
    assert text.endswith("Z") and text.startswith("2021-09-30T20:00")
    assert parse_utc_iso(text) == ts
    assert parse_utc_iso(text).utcoffset() == timedelta(0)
    assert parse_utc_iso(text).tzinfo == timezone.utc
