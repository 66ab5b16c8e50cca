import copy
import json
import math

import numpy as np
import pytest

from agrowatch import gate, report, scenario as scn, sensornet as sn, telemetry as tm
from agrowatch.errors import ValidationError

K = sn.SensorKind
Q = tm.Quality


@pytest.fixture(scope="module")
def doc():
    return copy.deepcopy(scn.replication_scenario().raw)


def test_replication_scenario_loads(doc):
    sc = scn.scenario_from_dict(doc)
    assert sc.polygon.area == pytest.approx(1e4)
    assert sc.link.path_loss_exponent == pytest.approx(4.0, abs=0.05)
    assert sc.takeoff_time - sc.start == 5400
    assert len(sc.build_nodes()) == 2 and all(len(n.kinds) == 12 for n in sc.build_nodes())


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("seed"),
    lambda d: d.update(seed=-1),
    lambda d: d.update(seed=2 ** 64),
    lambda d: d.update(seed="x"),
    lambda d: d.update(nodes=[]),
    lambda d: d["polygon"].update(vertices_m=[[0, 0], [1, 1]]),
    lambda d: d.update(start="not a time"),
    lambda d: d["lora"].update(spreading_factor=13),
    lambda d: d["environment"].update(Snow={"value": 1}),
])
def test_invalid_scenarios_rejected(doc, mutate):
    bad = copy.deepcopy(doc)
    mutate(bad)
    with pytest.raises(ValidationError):
        scn.scenario_from_dict(bad)


def test_load_scenario_errors(tmp_path):
    with pytest.raises(ValidationError):
        scn.load_scenario(tmp_path / "missing.json")
    p = tmp_path / "broken.json"
    p.write_text("{")
    with pytest.raises(ValidationError):
        scn.load_scenario(p)


def test_network_survives_uplink_outage(doc):
    sc = scn.scenario_from_dict(doc)
    store = tm.TelemetryStore()
    stats = scn.simulate_network(sc, 3600, np.random.default_rng(1), store)
    assert store.uplink_queue == ()
    assert store.sent == list(store.local_log)
    assert len(store) == 12 * sum(stats.published.values())


def test_wind_estimate_circular(doc):
    sc = scn.scenario_from_dict(doc)
    store = tm.TelemetryStore()
    scn.simulate_network(sc, 3600, np.random.default_rng(2), store)
    speed, direction = scn.wind_estimate(store, 3600 + sc.start, 600)
    assert speed == pytest.approx(2.36, abs=0.3)
    assert direction == pytest.approx(135, abs=5)


def test_run_writes_consistent_summary(doc, tmp_path):
    rep = scn.run_scenario(scn.scenario_from_dict(doc), tmp_path)
    assert rep.decision == "Go" and rep.exit_code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["plan"]["capture_count"] == 143
    assert summary["flight"]["captures"] == 143 and summary["flight"]["band_images"] == 715
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["NDVI"]["mean"] > stats["NDRE"]["mean"]
    assert stats["NDVI"]["coverage_fraction"] >= 0.99
    manifest = rep.manifest()
    assert all((tmp_path / f).exists() for f in manifest["artifacts"].values())


def test_rain_at_takeoff_is_nogo(doc, tmp_path):
    wet = copy.deepcopy(doc)
    wet["environment"]["Rain"] = {"value": 2.0}
    rep = scn.run_scenario(scn.scenario_from_dict(wet), tmp_path)
    assert rep.exit_code == 1
    readiness = json.loads((tmp_path / "readiness.json").read_text())
    assert readiness["blockers"] == [gate.Blocker.Rain.value]


def test_moderate_wind_aligns_legs(doc, tmp_path):
    sc = scn.scenario_from_dict(doc).with_constant_wind(6.0)
    rep = scn.run_scenario(sc, tmp_path)
    assert rep.exit_code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["readiness"]["optimize_for_wind"] is True


def rec(t, kind, value, node=1, q=Q.Valid):
    return tm.TelemetryRecord(node, kind, float(t), float(value), q)


def test_summary_matches_brute_force():
    rng = np.random.default_rng(3)
    recs = [rec(i, K.Temperature if i % 3 else K.Humidity, rng.normal(30, 5), node=1 + i % 2,
                q=Q.Valid if rng.random() < 0.8 else Q.OutOfRange) for i in range(300)]
    rows = {r["kind"]: r for r in report.summarize(recs)}
    for kind in (K.Temperature, K.Humidity):
        mine = [r for r in recs if r.kind is kind]
        vals = [r.value for r in mine if r.quality is Q.Valid]
        row = rows[kind.name]
        assert row["count"] == len(mine) and row["valid"] == len(vals)
        assert row["mean"] == pytest.approx(math.fsum(vals) / len(vals), abs=1e-12)
        assert row["min"] == min(vals) and row["max"] == max(vals)


def test_summary_tables():
    recs = [rec(0, K.Rain, 0.5), rec(60, K.Rain, 1.5)]
    csv_text = report.summary_csv(report.summarize(recs))
    assert csv_text.splitlines()[0] == ",".join(report.SUMMARY_COLUMNS)
    md = report.summary_markdown(report.summarize(recs))
    assert md.splitlines()[2].startswith("| Rain | mm")
    assert report.summary_csv([]).strip() == ",".join(report.SUMMARY_COLUMNS)


def test_series_and_svg():
    recs = [rec(5, K.WindSpeed, 3.0, node=2), rec(1, K.WindSpeed, 2.0, node=2),
            rec(2, K.WindSpeed, 99.0, node=1, q=Q.OutOfRange), rec(3, K.WindSpeed, 4.0, node=1)]
    s = report.series(recs, K.WindSpeed)
    assert s == {1: [(3.0, 4.0)], 2: [(1.0, 2.0), (5.0, 3.0)]}
    svg = report.line_plot_svg(s, "wind", "m/s")
    assert svg.count("<polyline") == 2 and svg.rstrip().endswith("</svg>")
    empty = report.line_plot_svg({}, "wind", "m/s")
    assert "<polyline" not in empty and "wind" in empty
