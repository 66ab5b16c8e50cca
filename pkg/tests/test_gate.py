import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

pvlib = pytest.importorskip("pvlib")

from agrowatch import gate, geo, sensornet as sn, telemetry as tm
from agrowatch.timeutil import parse_iso

K = sn.SensorKind
HANOI = geo.GeoPoint(21.03, 105.85)
D, B, W = gate.Decision, gate.Blocker, gate.FlightWarning


def spa_elevation(t, where):
    times = pd.DatetimeIndex([pd.Timestamp(t, unit="s", tz="UTC")])
    sp = pvlib.solarposition.get_solarposition(times, where.lat, where.lon, method="nrel_numpy")
    return float(sp["elevation"].iloc[0]), float(sp["azimuth"].iloc[0])


def test_matches_spa_at_hanoi_instants():
    base = parse_iso("2020-01-01T00:00:00Z")
    rng = np.random.default_rng(4)
    for t in base + rng.uniform(0, 365 * 86400, 300):
        el, az = gate.solar_position(float(t), HANOI)
        el_ref, az_ref = spa_elevation(float(t), HANOI)
        assert el == pytest.approx(el_ref, abs=0.5)
        if el_ref > 1:
            assert abs((az - az_ref + 180) % 360 - 180) < 0.5


def test_matches_spa_worldwide():
    rng = np.random.default_rng(8)
    for _ in range(200):
        where = geo.GeoPoint(float(rng.uniform(-66, 66)), float(rng.uniform(-180, 180)))
        t = float(parse_iso("2015-01-01T00:00:00Z") + rng.uniform(0, 15 * 365 * 86400))
        assert gate.sun_elevation(t, where) == pytest.approx(spa_elevation(t, where)[0], abs=0.5)


def test_replication_instant():
    t = parse_iso("2020-06-15T07:30:00Z")  # 14:30 local
    el = gate.sun_elevation(t, HANOI)
    assert el == pytest.approx(spa_elevation(t, HANOI)[0], abs=0.5)
    assert el > 45


def test_equator_equinox_noon_and_midnight():
    where = geo.GeoPoint(0.0, 0.0)
    day = parse_iso("2020-03-20T00:00:00Z")
    elevations = [gate.sun_elevation(day + m * 60.0, where) for m in range(11 * 60, 13 * 60)]
    assert max(elevations) == pytest.approx(90, abs=0.5)
    assert gate.sun_elevation(day + 7 * 60, where) < 0


def test_midnight_below_horizon_everywhere_near_equinox():
    for lon in range(-180, 181, 30):
        where = geo.GeoPoint(35.0, float(lon))
        local_midnight = parse_iso("2021-09-23T00:00:00Z") - lon / 15 * 3600
        assert gate.sun_elevation(local_midnight, where) < 0


def log_with(t, wind=None, rain=None, light=None, n=10):
    recs = []
    for i in range(n):
        ts = t - 590 + i * 60
        if wind is not None:
            recs.append(tm.TelemetryRecord(1, K.WindSpeed, ts, wind))
        if rain is not None:
            recs.append(tm.TelemetryRecord(1, K.Rain, ts, rain))
        if light is not None:
            recs.append(tm.TelemetryRecord(1, K.LightVisible, ts, light))
    return recs


T_HIGH_SUN = parse_iso("2020-06-15T07:30:00Z")


def test_high_wind_nogo():
    r = gate.evaluate(log_with(T_HIGH_SUN, wind=11.0, rain=0.0, light=85), T_HIGH_SUN, HANOI)
    assert r.decision is D.NoGo and r.blockers == (B.HighWind,) and not r.optimize_for_wind


def test_replication_conditions_go_clean():
    r = gate.evaluate(log_with(T_HIGH_SUN, wind=2.36, rain=0.0, light=85), T_HIGH_SUN, HANOI)
    assert r.decision is D.Go and r.warnings == () and r.optimize_for_wind is False
    assert r.inputs_snapshot["mean_wind_mps"] == pytest.approx(2.36)


def test_moderate_wind_optimizes():
    r = gate.evaluate(log_with(T_HIGH_SUN, wind=5.0, rain=0.0, light=85), T_HIGH_SUN, HANOI)
    assert r.decision is D.Go and r.optimize_for_wind and r.warnings == ()


def test_low_sun_warns():
    r = gate.decide(1.0, False, 30.0, None)
    assert r.decision is D.Go and r.warnings == (W.LowSunAngle,)


def test_rain_and_missing_wind():
    r = gate.evaluate(log_with(T_HIGH_SUN, wind=2.0, rain=0.5), T_HIGH_SUN, HANOI)
    assert r.decision is D.NoGo and r.blockers == (B.Rain,)
    r = gate.evaluate(log_with(T_HIGH_SUN, rain=0.0, light=85), T_HIGH_SUN, HANOI)
    assert r.decision is D.NoGo and r.blockers == (B.MissingData,)
    r = gate.evaluate([], T_HIGH_SUN, HANOI)
    assert r.blockers == (B.MissingData,)
    # drizzle at the threshold does not count as rain
    assert gate.evaluate(log_with(T_HIGH_SUN, wind=2.0, rain=0.1), T_HIGH_SUN, HANOI).go


def test_out_of_window_data_ignored():
    old = log_with(T_HIGH_SUN - 3600, wind=2.0)
    assert gate.evaluate(old, T_HIGH_SUN, HANOI).blockers == (B.MissingData,)


@pytest.mark.parametrize("wind,decision,optimize", [
    (10.0, D.Go, True), (10.0001, D.NoGo, False), (3.0, D.Go, True), (2.9999, D.Go, False), (0.0, D.Go, False),
])
def test_wind_boundaries(wind, decision, optimize):
    r = gate.decide(wind, False, 60.0, None)
    assert r.decision is decision and r.optimize_for_wind is optimize


def test_sun_boundary():
    assert gate.decide(1.0, False, 45.0, None).warnings == ()
    assert gate.decide(1.0, False, 44.999, None).warnings == (W.LowSunAngle,)


def test_cloud_rule():
    el = 60.0
    expect = 130 * np.sin(np.radians(el))
    assert gate.decide(1.0, False, el, 0.41 * expect).warnings == ()
    assert gate.decide(1.0, False, el, 0.39 * expect).warnings == (W.CloudLowLight,)
    # at the horizon the 5 klx floor applies
    assert gate.clear_sky_klx(-10) == 5.0
    for lux in (80.0, 90.0):
        assert W.CloudLowLight not in gate.decide(2.36, False, 54.0, lux).warnings


def test_truth_table():
    for wind, rain, el, lux in itertools.product([None, 0.0, 2.0, 3.0, 7.0, 10.0, 12.0], [False, True],
                                                 [-5.0, 30.0, 45.0, 70.0], [None, 1.0, 100.0]):
        r = gate.decide(wind, rain, el, lux)
        blocked = rain or wind is None or wind > 10
        assert (r.decision is D.NoGo) == blocked
        assert (B.Rain in r.blockers) == rain
        assert r.optimize_for_wind == (not blocked and 3 <= wind <= 10)
        assert (W.LowSunAngle in r.warnings) == (el < 45)
        assert (W.CloudLowLight in r.warnings) == (lux is not None and lux < 0.4 * gate.clear_sky_klx(el))


@given(st.floats(0, 30), st.floats(0, 30), st.booleans(), st.floats(-90, 90))
def test_wind_monotonicity(w1, w2, rain, el):
    lo, hi = sorted((w1, w2))
    if gate.decide(lo, rain, el, None).decision is D.NoGo:
        assert gate.decide(hi, rain, el, None).decision is D.NoGo


def test_readiness_invariants():
    with pytest.raises(ValueError):
        gate.Readiness(D.NoGo)
    with pytest.raises(ValueError):
        gate.Readiness(D.NoGo, (B.Rain,), optimize_for_wind=True)


def test_evaluate_is_pure():
    log = log_with(T_HIGH_SUN, wind=4.0, rain=0.0, light=85)
    assert gate.evaluate(log, T_HIGH_SUN, HANOI) == gate.evaluate(list(log), T_HIGH_SUN, HANOI)
    store = tm.TelemetryStore()
    store.extend(sorted(log, key=lambda r: r.t))
    assert gate.evaluate(store, T_HIGH_SUN, HANOI).to_dict() == gate.evaluate(log, T_HIGH_SUN, HANOI).to_dict()
