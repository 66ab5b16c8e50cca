"""Scenario files and the end-to-end run: sensors, gate, plan, flight, maps."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import flightsim, gate, geo, planner, radio, sensornet, spectral, telemetry
from .errors import ValidationError
from .timeutil import iso, parse_iso


@dataclass
class Scenario:
    name: str
    seed: int
    start: float
    takeoff_offset: float
    site: geo.GeoPoint
    site_name: str
    polygon: geo.FieldPolygon
    gateway: tuple[float, float]
    nodes: list[dict]
    environment: sensornet.EnvironmentScript
    lora: radio.LoraConfig
    link: radio.LinkBudget
    uplink_outages: list[tuple[float, float]]
    camera: geo.CameraModel
    sim_resolution: tuple[int, int]
    flight: dict
    gate: gate.GateConfig
    spectral: dict
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def frame(self) -> geo.LocalFrame:
        return geo.LocalFrame(self.site)

    @property
    def takeoff_time(self) -> float:
        return self.start + self.takeoff_offset

    def with_constant_wind(self, speed: float) -> "Scenario":
        env = self.environment.with_constant(sensornet.SensorKind.WindSpeed, speed)
        return replace(self, environment=env)

    def energy_model(self) -> planner.EnergyModel:
        f = self.flight
        return planner.EnergyModel(turn_penalty_s=f.get("turn_penalty_s", 2.0),
                                   k_head=f.get("k_head", 0.3),
                                   base_power_w=f.get("base_power_w", 390.0))

    def build_nodes(self) -> list[sensornet.NodeSim]:
        out = []
        for n in self.nodes:
            kinds = n.get("kinds", "all")
            if kinds == "all":
                kinds = list(sensornet.SensorKind)
            out.append(sensornet.NodeSim(int(n["id"]), tuple(n["position_m"]), kinds,
                                         float(n.get("period_s", 60.0)), self.environment))
        return out


def _require(doc: dict, key: str):
    if key not in doc:
        raise ValidationError(f"scenario is missing required field {key!r}")
    return doc[key]


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        seed = _require(doc, "seed")
        if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        site_doc = _require(doc, "site")
        site = geo.GeoPoint.from_dict(site_doc)
        poly_doc = _require(doc, "polygon")
        poly = geo.FieldPolygon(tuple(tuple(v) for v in poly_doc["vertices_m"]),
                                poly_doc.get("label", "A"))
        link_doc = dict(doc.get("link", {}))
        calib = link_doc.pop("calibration", None)
        link = radio.LinkBudget(**link_doc)
        if calib is not None:
            link = radio.calibrated(link, float(calib["distance_m"]), float(calib["rssi_dbm"]))
        cam_doc = dict(doc.get("camera", {}))
        sim_res = (int(cam_doc.pop("sim_width", 64)), int(cam_doc.pop("sim_height", 48)))
        camera = geo.CameraModel(**cam_doc) if cam_doc else geo.REDEDGE_M
        nodes = _require(doc, "nodes")
        if not nodes:
            raise ValidationError("scenario needs at least one sensor node")
        sc = Scenario(
            name=doc.get("name", "scenario"),
            seed=seed,
            start=parse_iso(_require(doc, "start")),
            takeoff_offset=float(doc.get("takeoff_offset_s", 3600.0)),
            site=site,
            site_name=site_doc.get("name", "site1"),
            polygon=poly,
            gateway=tuple(_require(doc, "gateway_m")),
            nodes=nodes,
            environment=sensornet.EnvironmentScript.from_dict(_require(doc, "environment")),
            lora=radio.LoraConfig(**doc.get("lora", {})),
            link=link,
            uplink_outages=[tuple(map(float, o)) for o in doc.get("uplink_outages_s", [])],
            camera=camera,
            sim_resolution=sim_res,
            flight=dict(doc.get("flight", {})),
            gate=gate.GateConfig(**doc.get("gate", {})),
            spectral=dict(doc.get("spectral", {})),
            raw=copy.deepcopy(doc),
        )
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid scenario: {exc}") from exc
    sc.build_nodes()
    return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)


def replication_scenario() -> Scenario:
    """The bundled 1 ha, 50 m altitude field-trial scenario."""
    text = resources.files("agrowatch").joinpath("data/replication_1ha.json").read_text()
    return scenario_from_dict(json.loads(text))


# ------------------------------------------------------------------- stages

def simulate_network(sc: Scenario, until: float, rng: np.random.Generator,
                     store: telemetry.TelemetryStore) -> sensornet.NetworkStats:
    broker = sensornet.Broker()
    ingest = telemetry.Ingestor(store)
    ingest.attach(broker, sc.site_name)
    net = sensornet.SensorNetwork(sc.build_nodes(), sc.gateway, sc.link, broker, rng,
                                  site=sc.site_name, epoch=sc.start, cfg=sc.lora)

    def uplink(t: float) -> None:
        down = any(a <= t < b for a, b in sc.uplink_outages)
        store.set_uplink(not down)
        store.flush()

    net.on_tick.append(uplink)
    net.run(until)
    return net.stats


def wind_estimate(store: telemetry.TelemetryStore, t: float, window: float) -> tuple[float, float]:
    speed = store.window_stat(sensornet.SensorKind.WindSpeed, t, window, "mean") or 0.0
    direction = telemetry.mean_direction(store, t, window)
    return speed, (direction if direction is not None else 0.0)


def build_plan(sc: Scenario, readiness: gate.Readiness, wind: tuple[float, float],
               pressure: float | None = None) -> planner.MissionPlan:
    f = sc.flight
    if readiness.optimize_for_wind:
        heading = wind[1]
    elif f.get("default_wind_dir_deg") is not None:
        heading = float(f["default_wind_dir_deg"])
    else:
        heading = planner.longest_edge_wind_dir(sc.polygon)
    basis = planner.sweep_basis(heading, sc.camera, f.get("altitude_m", 50.0),
                                f.get("sidelap", 0.75), f.get("frontlap", 0.75),
                                hfov_along_track=f.get("hfov_along_track", True))
    home = tuple(f["home_m"]) if f.get("home_m") is not None else None
    return planner.plan_mission(sc.polygon, basis, f.get("altitude_m", 50.0),
                                f.get("speed_mps", 5.0), f.get("endurance_s", 720.0),
                                sc.energy_model(), wind, home=home, pressure_hpa=pressure)


@dataclass
class RunReport:
    decision: str
    exit_code: int
    artifacts: dict[str, str]
    summary: dict[str, Any]

    def manifest(self) -> dict:
        return {"decision": self.decision, "exit_code": self.exit_code, "artifacts": self.artifacts}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def run_scenario(sc: Scenario, out_dir: str | Path, t_takeoff: float | None = None) -> RunReport:
    """Run sensors -> gate -> (if Go) plan -> fly -> maps, writing artifacts.

    ``t_takeoff`` is seconds after the scenario start; defaults to the
    scenario's own takeoff offset. A NoGo run writes only telemetry,
    readiness and summary files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    takeoff_rel = sc.takeoff_offset if t_takeoff is None else float(t_takeoff)
    takeoff_abs = sc.start + takeoff_rel
    net_seq, flight_seq, scene_seq = np.random.SeedSequence(sc.seed).spawn(3)
    artifacts: dict[str, str] = {}

    def record(name: str, filename: str) -> Path:
        artifacts[name] = filename
        return out / filename

    ndjson = record("telemetry_log", "telemetry.ndjson")
    if ndjson.exists():
        ndjson.unlink()
    store = telemetry.TelemetryStore(ndjson)
    try:
        stats = simulate_network(sc, takeoff_rel, np.random.default_rng(net_seq), store)
    finally:
        store.close()
    telemetry.export_csv(store, record("telemetry_csv", "telemetry.csv"))

    readiness = gate.evaluate(store, takeoff_abs, sc.site, sc.gate)
    _dump(record("readiness", "readiness.json"), readiness.to_dict())
    summary: dict[str, Any] = {
        "scenario": sc.name,
        "seed": sc.seed,
        "takeoff": iso(takeoff_abs),
        "network": {
            "frames_sent": {str(k): v for k, v in sorted(stats.frames_sent.items())},
            "published": {str(k): v for k, v in sorted(stats.published.items())},
            "dropped": {str(k): len(v) for k, v in sorted(stats.dropped.items())},
            "records": len(store),
            "uplinked": len(store.sent),
            "uplink_backlog": len(store.uplink_queue),
        },
        "readiness": readiness.to_dict(),
    }
    if not readiness.go:
        summary["flight"] = None
        _dump(record("summary", "summary.json"), summary)
        return RunReport(readiness.decision.value, 1, artifacts, summary)

    window = sc.gate.wind_window_s
    wind = wind_estimate(store, takeoff_abs, window)
    pressure = store.window_stat(sensornet.SensorKind.Pressure, takeoff_abs, window, "mean")
    plan = build_plan(sc, readiness, wind, pressure)
    frame = sc.frame
    _dump(record("mission", "mission.json"), planner.mission_to_json(plan, frame))
    plan_summary = plan.summary()
    plan_summary["est_duration_s"] = _finite(plan.est_duration)
    plan_summary["est_energy_wh"] = _finite(plan.est_energy)
    _dump(record("plan_summary", "plan_summary.json"), plan_summary)

    f = sc.flight
    result = flightsim.fly(plan, wind, sc.environment, f.get("battery_wh", 78.0), f.get("dt_s", 0.5),
                           np.random.default_rng(flight_seq), t0=takeoff_abs, env_t0=takeoff_rel,
                           frame=frame, reserve_fraction=f.get("reserve_fraction", 0.2),
                           energy_model=sc.energy_model(), pressure_hpa=pressure)
    flightsim.write_flight_log(result.messages, record("flight_log", "flight_log.ndjson"))

    sp = sc.spectral
    scene = spectral.default_scene(sc.polygon, int(scene_seq.generate_state(1)[0]),
                                   resolution=sp.get("scene_resolution_m", 0.5),
                                   texture_sigma=sp.get("texture_sigma", 0.01))
    ref_klx = sp.get("illumination_ref_klx", 100.0)
    captures = []
    for tr in result.triggers:
        t_rel = takeoff_rel + (tr.t - takeoff_abs)
        illum = 1.0
        if sc.environment.has(sensornet.SensorKind.LightVisible):
            illum = min(1.0, sc.environment.value(sensornet.SensorKind.LightVisible, t_rel) / ref_klx)
        captures.append(spectral.capture_scene(
            scene, sc.camera, tr.position, plan.basis, plan.altitude, capture_id=tr.capture_id,
            illumination=illum, width=sc.sim_resolution[0], height=sc.sim_resolution[1]))

    flight_summary = {
        "completed": result.completed,
        "abort_reason": result.abort_reason,
        "flight_time_s": result.flight_time,
        "energy_used_wh": result.energy_used_wh,
        "battery_remaining_wh": result.state.battery_wh,
        "captures": len(result.triggers),
        "band_images": len(result.triggers) * len(sc.camera.bands),
    }
    summary["plan"] = plan_summary
    summary["flight"] = flight_summary
    if captures:
        cell = sp.get("cell_size_m", 0.5)
        x0, y0, x1, y1 = sc.polygon.bounds
        bounds = (math.floor(x0 / cell) * cell, math.floor(y0 / cell) * cell, x1, y1)
        mos = spectral.mosaic(captures, cell, bounds)
        band_dir = out / "bands"
        band_dir.mkdir(exist_ok=True)
        for name, grid in mos.bands.items():
            spectral.save_raster(grid, band_dir / name, kind=name, origin=mos.origin, cell_size=cell)
            artifacts[f"band_{name}"] = f"bands/{name}.json"
        spectral.emit_rgb(mos, record("rgb_map", "rgb.ppm"))
        stats_doc = {}
        for kind in (spectral.IndexKind.NDVI, spectral.IndexKind.NDRE):
            raster = spectral.index_from_mosaic(mos, kind)
            key = kind.value.lower()
            spectral.save_index(raster, out / key)
            artifacts[f"{key}_raster"] = f"{key}.json"
            spectral.emit_map(raster, record(f"{key}_map", f"{key}.ppm"))
            stats_doc[kind.value] = spectral.index_stats(raster, sc.polygon)
        _dump(record("stats", "stats.json"), stats_doc)
        summary["indices"] = {k: {"mean": v["mean"], "coverage_fraction": v["coverage_fraction"]}
                              for k, v in stats_doc.items()}
    _dump(record("summary", "summary.json"), summary)
    return RunReport(readiness.decision.value, 0, artifacts, summary)


def artifact_hashes(out_dir: str | Path) -> dict[str, str]:
    root = Path(out_dir)
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}
