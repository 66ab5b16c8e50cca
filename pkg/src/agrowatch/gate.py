"""Pre-flight readiness rules.

* rain, or a mean wind above 10 m/s, blocks takeoff;
* sun below 45 degrees or a dim (cloudy) sky raise warnings;
* a mean wind between 3 and 10 m/s asks the planner to align legs
  across the wind.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

from .geo import GeoPoint
from .sensornet import SensorKind
from .telemetry import window_stat


class Decision(str, Enum):
    NoGo = "NoGo"
    Go = "Go"


class Blocker(str, Enum):
    Rain = "Rain"
    HighWind = "HighWind"
    MissingData = "MissingData"


class FlightWarning(str, Enum):
    CloudLowLight = "CloudLowLight"
    LowSunAngle = "LowSunAngle"


@dataclass(frozen=True)
class GateConfig:
    wind_window_s: float = 600.0
    max_mean_wind: float = 10.0
    optimize_wind_min: float = 3.0
    rain_threshold_mmh: float = 0.1
    min_sun_elevation: float = 45.0
    clear_sky_klx: float = 130.0
    clear_sky_floor_klx: float = 5.0
    cloud_fraction: float = 0.4


@dataclass(frozen=True)
class Readiness:
    decision: Decision
    blockers: tuple[Blocker, ...] = ()
    warnings: tuple[FlightWarning, ...] = ()
    optimize_for_wind: bool = False
    inputs_snapshot: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.decision is Decision.NoGo and not self.blockers:
            raise ValueError("NoGo needs at least one blocker")
        if self.optimize_for_wind and self.decision is not Decision.Go:
            raise ValueError("wind optimization only applies to Go decisions")

    @property
    def go(self) -> bool:
        return self.decision is Decision.Go

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decision"] = self.decision.value
        d["blockers"] = [b.value for b in self.blockers]
        d["warnings"] = [w.value for w in self.warnings]
        return d


def _julian_day(t: float) -> float:
    return t / 86400.0 + 2440587.5


def solar_position(t: float, where: GeoPoint) -> tuple[float, float]:
    """(elevation, azimuth) in degrees, NOAA solar calculator equations.

    ``t`` is POSIX seconds (UTC). Elevation is geometric: no refraction.
    Azimuth is clockwise from north.
    """
    jc = (_julian_day(t) - 2451545.0) / 36525.0
    mean_long = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    mean_anom = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    m = math.radians(mean_anom)
    center = (math.sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
              + math.sin(2 * m) * (0.019993 - 0.000101 * jc)
              + math.sin(3 * m) * 0.000289)
    true_long = mean_long + center
    omega = 125.04 - 1934.136 * jc
    app_long = true_long - 0.00569 - 0.00478 * math.sin(math.radians(omega))
    mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = math.radians(mean_obliq + 0.00256 * math.cos(math.radians(omega)))
    decl = math.asin(math.sin(obliq) * math.sin(math.radians(app_long)))

    y = math.tan(obliq / 2) ** 2
    l0 = math.radians(mean_long)
    eq_time = 4 * math.degrees(
        y * math.sin(2 * l0) - 2 * ecc * math.sin(m) + 4 * ecc * y * math.sin(m) * math.cos(2 * l0)
        - 0.5 * y * y * math.sin(4 * l0) - 1.25 * ecc * ecc * math.sin(2 * m))

    minutes_utc = (t % 86400.0) / 60.0
    true_solar_min = (minutes_utc + eq_time + 4 * where.lon) % 1440.0
    hour_angle = true_solar_min / 4.0 - 180.0
    if hour_angle < -180.0:
        hour_angle += 360.0
    lat = math.radians(where.lat)
    ha = math.radians(hour_angle)
    cos_zen = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(ha)
    zenith = math.acos(max(-1.0, min(1.0, cos_zen)))
    elevation = 90.0 - math.degrees(zenith)

    denom = math.cos(lat) * math.sin(zenith)
    if abs(denom) < 1e-12:
        azimuth = 180.0 if where.lat > math.degrees(decl) else 0.0
    else:
        cos_az = (math.sin(lat) * math.cos(zenith) - math.sin(decl)) / denom
        az = math.degrees(math.acos(max(-1.0, min(1.0, cos_az))))
        azimuth = (az + 180.0) % 360.0 if hour_angle > 0 else (540.0 - az) % 360.0
    return elevation, azimuth


def sun_elevation(t: float, where: GeoPoint) -> float:
    return solar_position(t, where)[0]


def clear_sky_klx(elevation_deg: float, cfg: GateConfig = GateConfig()) -> float:
    return max(cfg.clear_sky_klx * math.sin(math.radians(elevation_deg)), cfg.clear_sky_floor_klx)


def decide(mean_wind: float | None, raining: bool, elevation: float, visible_klx: float | None,
           cfg: GateConfig = GateConfig()) -> Readiness:
    """Apply the readiness rules to already-aggregated inputs.

    Boundaries follow the rule wording: wind exactly 10 m/s still flies,
    exactly 3 m/s already optimizes, sun exactly at 45 degrees does not warn.
    """
    snapshot = {
        "mean_wind_mps": mean_wind,
        "raining": raining,
        "sun_elevation_deg": elevation,
        "visible_klx": visible_klx,
    }
    blockers = []
    if raining:
        blockers.append(Blocker.Rain)
    if mean_wind is None:
        blockers.append(Blocker.MissingData)
    elif mean_wind > cfg.max_mean_wind:
        blockers.append(Blocker.HighWind)

    warnings = []
    if visible_klx is not None and visible_klx < cfg.cloud_fraction * clear_sky_klx(elevation, cfg):
        warnings.append(FlightWarning.CloudLowLight)
    if elevation < cfg.min_sun_elevation:
        warnings.append(FlightWarning.LowSunAngle)

    if blockers:
        return Readiness(Decision.NoGo, tuple(blockers), tuple(warnings), False, snapshot)
    optimize = cfg.optimize_wind_min <= mean_wind <= cfg.max_mean_wind
    return Readiness(Decision.Go, (), tuple(warnings), optimize, snapshot)


def evaluate(log, t: float, site: GeoPoint, cfg: GateConfig = GateConfig()) -> Readiness:
    """Readiness at POSIX time ``t`` from telemetry within the wind window.

    No wind data in the window is a fail-safe NoGo (``MissingData``).
    """
    window = cfg.wind_window_s
    mean_wind = window_stat(log, SensorKind.WindSpeed, t, window, "mean")
    max_rain = window_stat(log, SensorKind.Rain, t, window, "max")
    visible = window_stat(log, SensorKind.LightVisible, t, window, "mean")
    raining = max_rain is not None and max_rain > cfg.rain_threshold_mmh
    return decide(mean_wind, raining, sun_elevation(t, site), visible, cfg)
