"""Command-line entry point: netcheck, gate, plan, simulate, index, report.

Exit codes: 0 success or Go, 1 NoGo, 2 validation or usage error,
3 internal error. Errors are printed to stderr tagged with the module
that raised them.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import gate, geo, planner, radio, report, scenario, spectral, telemetry
from .errors import FrameError, PlanError, ValidationError
from .timeutil import parse_iso

EXIT_OK, EXIT_NOGO, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def _module_tag(exc: BaseException) -> str:
    tag = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("agrowatch."):
            tag = name.split(".", 1)[1]
    return tag


def _load_records(path: str) -> list[telemetry.TelemetryRecord]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such telemetry log: {path}")
    if p.suffix == ".csv":
        return telemetry.import_csv(p)
    return [telemetry.TelemetryRecord.from_json(line)
            for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


# ------------------------------------------------------------------ commands

def cmd_netcheck(args) -> int:
    link = radio.LinkBudget(tx_power_dbm=args.tx_power, tx_antenna_gain_dbi=args.tx_gain,
                            rx_sensitivity_dbm=args.sensitivity, path_loss_exponent=args.exponent)
    if args.calibrate:
        link = radio.calibrated(link, args.calibrate[0], args.calibrate[1])
    distances = args.distances or [50, 100, 200, 450, 1000, 1432, 2000]
    print("distance_m,rssi_dbm,delivered")
    for d, rssi, ok in radio.range_table(link, distances):
        print(f"{d:g},{rssi:.3f},{str(ok).lower()}")
    print(f"# exponent={link.path_loss_exponent:.4f} max_range_m={radio.max_range(link):.1f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_gate(args) -> int:
    records = _load_records(args.log)
    t = parse_iso(args.time)
    site = geo.GeoPoint(args.lat, args.lon)
    r = gate.evaluate(records, t, site, gate.GateConfig(wind_window_s=args.window))
    _emit(r.to_dict())
    return EXIT_OK if r.go else EXIT_NOGO


def cmd_plan(args) -> int:
    if args.polygon:
        poly, origin = geo.load_polygon(args.polygon)
    else:
        sc = scenario.replication_scenario()
        poly, origin = sc.polygon, sc.site
    wind = (args.wind_speed, args.wind_dir)
    heading = args.wind_dir if args.align_wind else planner.longest_edge_wind_dir(poly)
    basis = planner.sweep_basis(heading, geo.REDEDGE_M, args.altitude, args.sidelap, args.frontlap)
    plan = planner.plan_mission(poly, basis, args.altitude, args.speed, args.endurance,
                                wind=wind, home=tuple(args.home) if args.home else None)
    mission = planner.mission_to_json(plan, geo.LocalFrame(origin))
    summary = plan.summary()
    summary["band_images"] = plan.capture_count * len(geo.REDEDGE_M.bands)
    if args.out:
        Path(args.out).write_text(json.dumps(mission, indent=2) + "\n")
        _emit(summary)
    else:
        _emit({"summary": summary, "mission": mission})
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = scenario.load_scenario(args.scenario) if args.scenario else scenario.replication_scenario()
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        sc = scenario.Scenario(**{**sc.__dict__, "seed": args.seed})
    if args.force_wind is not None:
        sc = sc.with_constant_wind(args.force_wind)
    out = Path(args.out)
    rep = scenario.run_scenario(sc, out, args.takeoff)
    manifest = rep.manifest()
    manifest["out_dir"] = str(out)
    _emit(manifest)
    return rep.exit_code


def cmd_index(args) -> int:
    src = Path(args.bands)
    bands = {}
    header = None
    for name in ("NIR", "Red", "RedEdge"):
        if not (src / f"{name}.json").exists():
            raise ValidationError(f"missing band raster {name} in {src}")
        bands[name], header = spectral.load_raster(src / name)
    origin, cell = tuple(header["origin"]), header["cell_size"]
    poly = geo.load_polygon(args.polygon)[0] if args.polygon else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = {}
    rasters = {
        "ndvi": spectral.ndvi(bands["NIR"], bands["Red"], origin=origin, cell_size=cell),
        "ndre": spectral.ndre(bands["NIR"], bands["RedEdge"], origin=origin, cell_size=cell),
    }
    files = {}
    for key, raster in rasters.items():
        spectral.save_index(raster, out / key)
        spectral.emit_map(raster, out / f"{key}.ppm")
        stats[raster.kind.value] = spectral.index_stats(raster, poly)
        files[f"{key}_raster"] = f"{key}.json"
        files[f"{key}_map"] = f"{key}.ppm"
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    files["stats"] = "stats.json"
    _emit({"out_dir": str(out), "artifacts": files})
    return EXIT_OK


def cmd_report(args) -> int:
    records = _load_records(args.log)
    kinds = None
    if args.kind:
        from .sensornet import SensorKind
        kinds = [SensorKind.parse(k) for k in args.kind]
    files = report.write_report(records, args.out, kinds)
    if args.format == "markdown":
        print(report.summary_markdown(report.summarize(records)), end="")
    else:
        _emit({"out_dir": str(args.out), "artifacts": files})
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="agrowatch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    n = sub.add_parser("netcheck", help="LoRa link budget range table (CSV)")
    n.add_argument("--tx-power", type=float, default=20.0)
    n.add_argument("--tx-gain", type=float, default=18.0)
    n.add_argument("--sensitivity", type=float, default=-120.0)
    n.add_argument("--exponent", type=float, default=2.0)
    n.add_argument("--calibrate", type=float, nargs=2, metavar=("DIST_M", "RSSI_DBM"))
    n.add_argument("--distances", type=float, nargs="+")
    n.set_defaults(func=cmd_netcheck)

    g = sub.add_parser("gate", help="flight readiness from a telemetry log")
    g.add_argument("--log", required=True, help="telemetry .ndjson or .csv")
    g.add_argument("--time", required=True, help="ISO-8601 UTC takeoff time")
    g.add_argument("--lat", type=float, required=True)
    g.add_argument("--lon", type=float, required=True)
    g.add_argument("--window", type=float, default=600.0)
    g.set_defaults(func=cmd_gate)

    pl = sub.add_parser("plan", help="survey mission for a field polygon")
    pl.add_argument("--polygon", help="polygon JSON; defaults to the bundled 1 ha field")
    pl.add_argument("--altitude", type=float, default=50.0)
    pl.add_argument("--speed", type=float, default=5.0)
    pl.add_argument("--sidelap", type=float, default=0.75)
    pl.add_argument("--frontlap", type=float, default=0.75)
    pl.add_argument("--endurance", type=float, default=720.0)
    pl.add_argument("--wind-speed", type=float, default=0.0)
    pl.add_argument("--wind-dir", type=float, default=0.0)
    pl.add_argument("--align-wind", action="store_true", help="run legs across the wind")
    pl.add_argument("--home", type=float, nargs=2, metavar=("X_M", "Y_M"))
    pl.add_argument("--out", help="write mission JSON here and print only the summary")
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="end-to-end scenario run")
    s.add_argument("--scenario", help="scenario JSON; defaults to the bundled replication run")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--force-wind", type=float, help="replace the wind script with a constant (m/s)")
    s.add_argument("--takeoff", type=float, help="takeoff, seconds after scenario start")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("index", help="NDVI/NDRE rasters, maps and stats from band rasters")
    i.add_argument("--bands", required=True, help="directory with NIR/Red/RedEdge rasters")
    i.add_argument("--out", required=True)
    i.add_argument("--polygon")
    i.set_defaults(func=cmd_index)

    r = sub.add_parser("report", help="summary tables and SVG plots of a telemetry log")
    r.add_argument("--log", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--kind", action="append", help="sensor kind to plot (repeatable)")
    r.add_argument("--format", choices=["json", "markdown"], default="json")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"agrowatch: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValidationError, FrameError, PlanError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"agrowatch [{_module_tag(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"agrowatch [{_module_tag(exc)}]: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
