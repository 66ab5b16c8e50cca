"""Point-mass UAV flying a :class:`MissionPlan` and emitting flight-link messages.

The vehicle holds its ground track between waypoints; along-track ground
speed is the airspeed setpoint minus the headwind component, the same model
the planner uses for its estimates. Steps are split at waypoint arrivals, so
arrival times and capture positions do not depend on ``dt``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geo import LocalFrame
from .planner import Action, EnergyModel, MissionPlan, track_speeds
from .sensornet import EnvironmentScript, SensorKind

MAX_AIRSPEED = 10.0  # 36 km/h airframe limit


class Status(str, Enum):
    Idle = "Idle"
    Enroute = "Enroute"
    Capturing = "Capturing"
    ReturnToLaunch = "ReturnToLaunch"
    Landed = "Landed"
    Aborted = "Aborted"


@dataclass(frozen=True)
class Heartbeat:
    t: float
    status: str


@dataclass(frozen=True)
class Position:
    t: float
    lat: float | None
    lon: float | None
    x: float
    y: float
    alt: float


@dataclass(frozen=True)
class Battery:
    t: float
    remaining_wh: float
    voltage: float


@dataclass(frozen=True)
class MissionItemReached:
    t: float
    seq: int


@dataclass(frozen=True)
class CameraTrigger:
    t: float
    capture_id: int
    x: float
    y: float
    waypoint_seq: int

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class MissionComplete:
    t: float


@dataclass(frozen=True)
class Abort:
    t: float
    reason: str  # LowBattery | WindExceeded | Infeasible | BatteryDepleted


FlightLinkMessage = (Heartbeat | Position | Battery | MissionItemReached | CameraTrigger
                     | MissionComplete | Abort)


def message_to_json(msg) -> str:
    d = {"type": type(msg).__name__}
    for k, v in asdict(msg).items():
        d[k] = round(v, 6) if isinstance(v, float) else v
    return json.dumps(d)


def write_flight_log(messages: Sequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in messages:
            fh.write(message_to_json(m) + "\n")


@dataclass
class UavState:
    x: float
    y: float
    altitude: float
    airspeed: float
    battery_wh: float
    mass_kg: float = 2.5
    status: Status = Status.Idle

    def __post_init__(self):
        if self.battery_wh < 0:
            raise ValidationError("battery charge cannot be negative")
        if not 0 < self.airspeed <= MAX_AIRSPEED:
            raise ValidationError(f"airspeed must be in (0, {MAX_AIRSPEED}] m/s")


@dataclass
class FlightResult:
    messages: list
    state: UavState
    flight_time: float
    energy_used_wh: float
    abort_reason: str | None = None
    completed: bool = False
    triggers: list[CameraTrigger] = field(default_factory=list)


def battery_voltage(fraction: float) -> float:
    """Crude 4S LiPo curve, 16.8 V full to 14.0 V empty."""
    return 14.0 + 2.8 * min(max(fraction, 0.0), 1.0)


def fly(plan: MissionPlan, wind: tuple[float, float] = (0.0, 0.0),
        env: EnvironmentScript | None = None, battery: float = 78.0, dt: float = 0.5,
        rng: np.random.Generator | None = None, *, t0: float = 0.0, env_t0: float = 0.0,
        frame: LocalFrame | None = None, reserve_fraction: float = 0.2,
        energy_model: EnergyModel = EnergyModel(), pressure_hpa: float | None = None,
        max_wind: float = MAX_AIRSPEED, gust_sigma: float = 0.0,
        report_period: float = 1.0, max_time: float = 6 * 3600.0) -> FlightResult:
    """Simulate the mission and return the message stream.

    Wind comes from ``env`` (WindSpeed / WindDirection scripts, sampled at
    ``env_t0 + elapsed``) where scripted, otherwise the constant ``wind``.
    ``t0`` offsets message timestamps. Any instantaneous wind above
    ``max_wind`` aborts to a straight return to launch, as does dropping
    under ``reserve_fraction`` of the starting charge.
    """
    if not 0 < dt <= 1.0:
        raise ValidationError("dt must be in (0, 1] s")
    if gust_sigma > 0 and rng is None:
        raise ValidationError("gusts need an rng")
    wps = plan.waypoints
    home = plan.home if plan.home is not None else wps[0].position
    state = UavState(home[0], home[1], plan.altitude, plan.speed, battery)
    capacity = battery
    reserve = reserve_fraction * capacity
    msgs: list = []
    triggers: list[CameraTrigger] = []
    elapsed = 0.0
    used_j = 0.0
    target = 0
    pause = 0.0
    abort: str | None = None
    completed = False
    next_report = 0.0

    def now() -> float:
        return t0 + elapsed

    def wind_at(t_rel: float) -> tuple[float, float]:
        speed, direction = wind
        if env is not None and env.has(SensorKind.WindSpeed):
            speed = env.value(SensorKind.WindSpeed, env_t0 + t_rel)
        if env is not None and env.has(SensorKind.WindDirection):
            direction = env.value(SensorKind.WindDirection, env_t0 + t_rel)
        if gust_sigma > 0:
            speed = max(0.0, speed + rng.normal(0.0, gust_sigma))
        return speed, direction

    def pressure_at(t_rel: float) -> float | None:
        if env is not None and env.has(SensorKind.Pressure):
            return env.value(SensorKind.Pressure, env_t0 + t_rel)
        return pressure_hpa

    def report() -> None:
        geo = frame.from_local((state.x, state.y), alt=state.altitude) if frame else None
        msgs.append(Heartbeat(now(), state.status.value))
        msgs.append(Position(now(), geo.lat if geo else None, geo.lon if geo else None,
                             state.x, state.y, state.altitude))
        msgs.append(Battery(now(), state.battery_wh,
                            battery_voltage(state.battery_wh / capacity if capacity else 0.0)))

    def start_rtl(reason: str) -> None:
        nonlocal abort, target, pause
        abort = reason
        msgs.append(Abort(now(), reason))
        state.status = Status.ReturnToLaunch
        target = -1
        pause = 0.0

    def drain(power_w: float, seconds: float) -> float:
        """Consume energy; returns seconds actually flown before empty."""
        nonlocal used_j
        need = power_w * seconds / 3600.0
        if need <= state.battery_wh:
            state.battery_wh -= need
            used_j += power_w * seconds
            return seconds
        flown = state.battery_wh * 3600.0 / power_w
        used_j += state.battery_wh * 3600.0
        state.battery_wh = 0.0
        return flown

    state.status = Status.Enroute
    report()
    next_report = report_period
    done = False
    while not done and elapsed < max_time:
        w = wind_at(elapsed)
        p = pressure_at(elapsed)
        if state.status is not Status.ReturnToLaunch and w[0] > max_wind:
            start_rtl("WindExceeded")
        tau = dt
        while tau > 1e-12 and not done:
            if pause > 0:
                step = min(pause, tau)
                flown = drain(energy_model.hover_power(p), step)
                elapsed += flown
                pause -= flown
                tau -= flown
                if flown < step:
                    break
                continue
            goal = home if target < 0 else wps[target].position
            dx, dy = goal[0] - state.x, goal[1] - state.y
            dist = math.hypot(dx, dy)
            if dist > 0:
                d = (dx / dist, dy / dist)
                ground, head = track_speeds(d, w, state.airspeed)
                if ground <= 0:
                    if state.status is Status.ReturnToLaunch:
                        abort = abort or "Infeasible"
                        msgs.append(Abort(now(), "Infeasible"))
                        state.status = Status.Aborted
                        done = True
                        break
                    start_rtl("Infeasible")
                    continue
                step = min(tau, dist / ground)
                flown = drain(energy_model.power(head, state.airspeed, p), step)
                if flown >= dist / ground:
                    state.x, state.y = goal
                else:
                    state.x += d[0] * ground * flown
                    state.y += d[1] * ground * flown
                elapsed += flown
                tau -= flown
                if flown < step:
                    break
                if step < dist / ground:
                    continue
            # arrived at goal
            if target < 0:
                state.status = Status.Landed
                done = True
                break
            wp = wps[target]
            msgs.append(MissionItemReached(now(), target))
            if wp.action is Action.TriggerCapture:
                trig = CameraTrigger(now(), len(triggers), state.x, state.y, target)
                triggers.append(trig)
                msgs.append(trig)
            nxt = target + 1
            if nxt >= len(wps):
                completed = True
                msgs.append(MissionComplete(now()))
                state.status = Status.Landed
                done = True
                break
            if (wp.action is Action.TriggerCapture and wps[nxt].action is Action.TriggerCapture
                    and wps[nxt].leg != wp.leg):
                pause = energy_model.turn_penalty_s
            target = nxt
        if state.battery_wh <= 0.0 and not done:
            msgs.append(Abort(now(), "BatteryDepleted"))
            abort = abort or "BatteryDepleted"
            state.status = Status.Aborted
            done = True
        elif (not done and state.status is not Status.ReturnToLaunch
              and state.battery_wh < reserve):
            start_rtl("LowBattery")
        while elapsed + 1e-9 >= next_report and not done:
            report()
            next_report += report_period
    report()
    return FlightResult(msgs, state, elapsed, used_j / 3600.0, abort, completed, triggers)


def captures_to_spectral(triggers, scene, camera, basis, altitude, **kw):
    """One multispectral capture per trigger; see :func:`spectral.capture_scene`."""
    from .spectral import capture_scene

    return [capture_scene(scene, camera, (tr.x, tr.y), basis, altitude, capture_id=tr.capture_id, **kw)
            for tr in triggers]
