from datetime import date, datetime, time

import numpy as np
import pytest

from escalator_rul.domain import (
    LOCAL_TZ,
    Direction,
    EscalatorMeta,
    FreqClass,
    ServiceWindow,
    sensor_point,
)
from escalator_rul.energy import (
    EventKind,
    analyze_day,
    detect_events,
    energy_per_passenger_wh,
)
from escalator_rul.synth import (
    InjectedEvent,
    InjectedKind,
    SimConfig,
    generate_energy_day,
    generate_spectrum,
    iter_spectra,
    write_raw,
)
from escalator_rul.vibration import DEFAULT_BANDS, band_rms, compute_at

DAY = date(2021, 10, 5)
LO, HI = ServiceWindow().slot_range()


def cfg(**kw):
    kw.setdefault("start", date(2021, 10, 1))
    kw.setdefault("end", date(2021, 10, 31))
    return SimConfig(**kw)


def test_no_load_day_stays_within_noise_bound():
    c = cfg(daily_passengers={0: 0.0}, fixed_loss_wh_per_min={0: 20.0})
    e = generate_energy_day(c, 0, DAY).e_total_wh
    assert np.all(np.abs(e[LO:HI] - 20.0) <= 20.0 * c.noise + 1e-12)
    assert np.all(e[:LO] == 0.0) and np.all(e[HI:] == 0.0)


def test_corrective_shutdown_run():
    ev = InjectedEvent(DAY, 3, InjectedKind.CORRECTIVE_SHUTDOWN, 60)
    day = generate_energy_day(cfg(injected_events=[ev]), 3, DAY)
    low = day.e_total_wh < 5.0
    in_win = np.zeros(1440, dtype=bool)
    in_win[LO:HI] = True
    assert (low & in_win).sum() == 60
    s = ev.start_slot()
    assert low[s : s + 60].all()
    (found,) = detect_events(day.profile())
    assert (found.kind, found.duration_min) == (EventKind.CORRECTIVE, 60)


def test_preventive_night_run():
    ev = InjectedEvent(DAY, 3, InjectedKind.PREVENTIVE_NIGHT, 45)
    day = generate_energy_day(cfg(injected_events=[ev]), 3, DAY)
    (found,) = detect_events(day.profile())
    assert (found.kind, found.duration_min) == (EventKind.PREVENTIVE, 45)
    assert found.start.astimezone(LOCAL_TZ).time() == time(2, 0)


def test_down_variable_energy_matches_passenger_truth():
    meta = EscalatorMeta(0, 8.175, Direction.DOWN, 18.0)
    c = cfg(fleet=[meta], daily_passengers={0: 798.0}, noise=0.0)
    truth = generate_energy_day(c, 0, DAY).truth
    assert truth.variable_energy_wh == pytest.approx(truth.passengers * energy_per_passenger_wh(meta), rel=1e-12)
    # the passenger energy identity the estimator inverts
    assert 798 * energy_per_passenger_wh(meta) == pytest.approx(1000.0, rel=1e-3)


def test_noise_free_down_day_recovers_variable_energy():
    meta = EscalatorMeta(0, 8.175, Direction.DOWN, 18.0)
    c = cfg(fleet=[meta], daily_passengers={0: 798.0}, noise=0.0)
    day = generate_energy_day(c, 0, DAY)
    f = analyze_day(day.profile(), meta)
    assert f.fixed_loss_wh_min == pytest.approx(day.truth.fixed_loss_wh_per_min)
    assert f.variable_loss_wh == pytest.approx(day.truth.variable_energy_wh, rel=1e-9)
    assert f.passengers == pytest.approx(day.truth.passengers, rel=1e-9)


def test_day_shape_direction():
    c = cfg()
    up = generate_energy_day(c, 0, DAY).e_total_wh
    down = generate_energy_day(c, 5, DAY).e_total_wh
    nine = slice(300, 360)  # 09:00-10:00
    assert up[nine].mean() > np.median(up[LO:HI])
    assert down[nine].mean() < np.median(down[LO:HI])


def test_energy_day_deterministic():
    a = generate_energy_day(cfg(seed=5), 7, DAY)
    b = generate_energy_day(cfg(seed=5), 7, DAY)
    c = generate_energy_day(cfg(seed=6), 7, DAY)
    assert np.array_equal(a.e_imp_wh, b.e_imp_wh) and np.array_equal(a.e_exp_wh, b.e_exp_wh)
    assert not np.array_equal(a.e_imp_wh, c.e_imp_wh)


def test_regen_only_on_down_units():
    c = cfg()
    assert not generate_energy_day(c, 0, DAY).e_exp_wh.any()
    assert generate_energy_day(c, 5, DAY).e_exp_wh.any()


def test_generation_errors():
    with pytest.raises(ValueError):
        generate_energy_day(cfg(), 99, DAY)
    with pytest.raises(ValueError):
        generate_energy_day(cfg(), 0, date(2022, 1, 1))
    with pytest.raises(ValueError):
        InjectedEvent(DAY, 0, InjectedKind.PREVENTIVE_NIGHT, 0)
    with pytest.raises(ValueError):
        cfg(start=date(2021, 11, 1), end=date(2021, 10, 1))


TS = datetime(2021, 10, 5, 9, 30, tzinfo=LOCAL_TZ)


def test_zero_degradation_gives_zero_spectrum():
    s = generate_spectrum(cfg(degradation={2: (0.0, 0.09)}), 2, 1, TS)
    assert not s.magnitudes.any()


def test_spectrum_deterministic():
    a = generate_spectrum(cfg(), 2, 3, TS)
    b = generate_spectrum(cfg(), 2, 3, TS)
    assert np.array_equal(a.magnitudes, b.magnitudes)


@pytest.mark.parametrize("point_id", range(1, 9))
def test_spectrum_energy_in_dominant_band(point_id):
    s = generate_spectrum(cfg(), 2, point_id, TS)
    assert s.magnitudes.size == 1280 and s.bin_hz == 10.0
    fc = sensor_point(point_id).freq_class
    band = DEFAULT_BANDS[fc]
    assert band_rms(s, band.band_lo_khz, band.band_hi_khz) > band_rms(s, band.band_hi_khz, 12.8)
    if fc is FreqClass.HIGH:
        assert band_rms(s, 2.0, 10.0) > band_rms(s, 10.0, 12.8)


def test_spectrum_level_follows_degradation_curve():
    c = cfg(spike_probability=0.0)
    meta = c.meta(2)
    a, b = c.degradation_for(2)
    level = a * np.exp(b * meta.age_at(TS.date()))
    values = [compute_at(s, DEFAULT_BANDS[sensor_point(s.point_id).freq_class]).at_value for s in iter_spectra(c, 2, TS.date())]
    assert all(0.8 * level - 1e-12 <= v <= 1.2 * level + 1e-12 for v in values)


def test_spectrum_bad_point():
    with pytest.raises(ValueError):
        generate_spectrum(cfg(), 2, 9, TS)


def test_write_raw_is_reproducible(tmp_path):
    c = cfg(end=date(2021, 10, 2), fleet=cfg().fleet[:2])
    write_raw(c, tmp_path / "a")
    write_raw(c, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) > 0
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_config_from_json():
    c = SimConfig.from_json(
        {
            "seed": 3,
            "escalators": [1, 2],
            "start": "2021-10-01",
            "end": "2021-10-03",
            "injected_events": [{"date": "2021-10-02", "escalator": 1, "kind": "PreventiveNight", "duration_min": 30}],
        }
    )
    assert [m.id for m in c.fleet] == [1, 2] and c.seed == 3 and len(c.dates()) == 3
    assert c.injected_events[0].kind is InjectedKind.PREVENTIVE_NIGHT
