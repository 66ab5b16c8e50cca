"""Wind-aligned serpentine coverage missions over a field polygon.

Legs run along ``i_hat``, perpendicular to the wind, and step along
``j_hat``, which points toward where the wind comes from. The first leg sits
at the downwind edge and later legs move upwind. Each leg line is cut
exactly against the polygon, so concave fields get several capture segments
per leg.

Wind directions are meteorological: the bearing the wind blows *from*,
clockwise from north. Local frames are x east, y north.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import EmptyPlan, InfeasiblePlan, ValidationError
from .geo import CameraModel, FieldPolygon, LocalFrame, footprint, point_in_polygon, points_in_polygon

Point = tuple[float, float]
_EPS = 1e-9


def wind_unit(direction_deg: float) -> Point:
    """Unit vector pointing toward the bearing the wind blows from."""
    a = math.radians(direction_deg)
    return (math.sin(a), math.cos(a))


@dataclass(frozen=True)
class SweepBasis:
    i_hat: Point
    j_hat: Point
    leg_spacing: float
    trigger_spacing: float
    footprint_i: float
    footprint_j: float

    def __post_init__(self):
        if not (self.leg_spacing > 0 and self.trigger_spacing > 0):
            raise ValidationError("spacings must be positive")
        if abs(self.i_hat[0] * self.j_hat[0] + self.i_hat[1] * self.j_hat[1]) > 1e-9:
            raise ValidationError("basis vectors are not orthogonal")

    def to_local(self, along: float, across: float) -> Point:
        return (along * self.i_hat[0] + across * self.j_hat[0],
                along * self.i_hat[1] + across * self.j_hat[1])

    def project(self, p: Sequence[float]) -> Point:
        return (p[0] * self.i_hat[0] + p[1] * self.i_hat[1],
                p[0] * self.j_hat[0] + p[1] * self.j_hat[1])


def sweep_basis(wind_dir: float, camera: CameraModel, altitude: float,
                sidelap: float, frontlap: float, *, hfov_along_track: bool = True) -> SweepBasis:
    """Leg/step vectors and spacings for a wind direction and camera.

    With ``hfov_along_track`` (the default) the horizontal field of view
    lies along the legs, so the trigger spacing comes from the wider
    footprint side and the leg spacing from the narrower one.
    """
    if not (0 <= sidelap < 1 and 0 <= frontlap < 1):
        raise ValidationError("overlaps must be in [0, 1)")
    fw, fh = footprint(camera, altitude)
    fp_i, fp_j = (fw, fh) if hfov_along_track else (fh, fw)
    if not (fp_i > 0 and fp_j > 0 and math.isfinite(fp_i * fp_j)):
        raise ValidationError("degenerate camera footprint")
    j_hat = wind_unit(wind_dir)
    i_hat = (-j_hat[1], j_hat[0])
    return SweepBasis(i_hat, j_hat, fp_j * (1 - sidelap), fp_i * (1 - frontlap), fp_i, fp_j)


class Action(str, Enum):
    Transit = "Transit"
    TriggerCapture = "TriggerCapture"


@dataclass(frozen=True)
class Waypoint:
    position: Point
    altitude: float
    action: Action
    leg: int = -1


@dataclass(frozen=True)
class EnergyModel:
    """Power draw from a still-air baseline, a headwind term and air pressure.

    ``power = base * (1 + k_head * headwind / airspeed) * (p_ref / p) ** exponent``.
    Tailwind does not reduce power below the baseline.
    """

    base_power_w: float = 390.0
    k_head: float = 0.3
    pressure_exponent: float = 0.5
    reference_pressure_hpa: float = 1013.25
    turn_penalty_s: float = 2.0

    def pressure_factor(self, pressure_hpa: float | None) -> float:
        if pressure_hpa is None:
            return 1.0
        return (self.reference_pressure_hpa / pressure_hpa) ** self.pressure_exponent

    def power(self, headwind: float, airspeed: float, pressure_hpa: float | None = None) -> float:
        return (self.base_power_w * (1.0 + self.k_head * max(headwind, 0.0) / airspeed)
                * self.pressure_factor(pressure_hpa))

    def hover_power(self, pressure_hpa: float | None = None) -> float:
        return self.base_power_w * self.pressure_factor(pressure_hpa)


def track_speeds(direction: Point, wind: tuple[float, float], airspeed: float) -> tuple[float, float]:
    """(ground speed, headwind component) for a unit track direction.

    The autopilot holds the ground track, so only the along-track wind
    component changes progress.
    """
    speed, wdir = wind
    u = wind_unit(wdir)
    headwind = speed * (u[0] * direction[0] + u[1] * direction[1])
    return airspeed - headwind, headwind


def estimate_energy(path: Sequence[Point], wind: tuple[float, float], speed: float,
                    energy_model: EnergyModel = EnergyModel(), *, turns: int = 0,
                    pressure_hpa: float | None = None) -> tuple[float, float]:
    """(duration s, energy Wh) for flying ``path`` plus ``turns`` turn pauses."""
    if not speed > 0:
        raise ValidationError("airspeed must be positive")
    duration = turns * energy_model.turn_penalty_s
    joules = duration * energy_model.hover_power(pressure_hpa)
    for a, b in zip(path[:-1], path[1:]):
        length = math.dist(a, b)
        if length == 0:
            continue
        d = ((b[0] - a[0]) / length, (b[1] - a[1]) / length)
        ground, head = track_speeds(d, wind, speed)
        if ground <= 0:
            raise InfeasiblePlan(f"ground speed {ground:.2f} m/s on a {length:.1f} m segment")
        dt = length / ground
        duration += dt
        joules += energy_model.power(head, speed, pressure_hpa) * dt
    return duration, joules / 3600.0


@dataclass
class MissionPlan:
    waypoints: list[Waypoint]
    capture_count: int
    est_distance: float
    est_duration: float
    est_energy: float
    wind_used: tuple[float, float]
    feasible: bool
    basis: SweepBasis
    altitude: float
    speed: float
    home: Point | None = None
    leg_count: int = 0
    issues: list[str] = field(default_factory=list)

    @property
    def captures(self) -> list[Waypoint]:
        return [w for w in self.waypoints if w.action is Action.TriggerCapture]

    @property
    def path(self) -> list[Point]:
        return [w.position for w in self.waypoints]

    def summary(self) -> dict:
        return {
            "capture_count": self.capture_count,
            "leg_count": self.leg_count,
            "est_distance_m": self.est_distance,
            "est_duration_s": self.est_duration,
            "est_energy_wh": self.est_energy,
            "feasible": self.feasible,
            "wind_used": {"speed_mps": self.wind_used[0], "direction_deg": self.wind_used[1]},
            "leg_spacing_m": self.basis.leg_spacing,
            "trigger_spacing_m": self.basis.trigger_spacing,
            "issues": list(self.issues),
        }


def leg_offsets(poly: FieldPolygon, basis: SweepBasis) -> list[float]:
    """Across-wind offsets of the legs, centered on the polygon's extent."""
    ts = [basis.project(v)[1] for v in poly.vertices]
    lo, hi = min(ts), max(ts)
    width = hi - lo
    s = basis.leg_spacing
    n = max(1, math.ceil(width / s - _EPS))
    start = lo + (width - (n - 1) * s) / 2.0
    return [start + k * s for k in range(n)]


def leg_segments(poly: FieldPolygon, basis: SweepBasis, offset: float) -> list[tuple[float, float]]:
    """Sorted (start, end) along-leg intervals where the leg lies in the polygon."""
    crossings = []
    proj = [basis.project(v) for v in poly.vertices]
    n = len(proj)
    for k in range(n):
        (ia, ta), (ib, tb) = proj[k], proj[(k + 1) % n]
        if (ta > offset) != (tb > offset):
            crossings.append(ia + (offset - ta) / (tb - ta) * (ib - ia))
    crossings.sort()
    return [(crossings[k], crossings[k + 1]) for k in range(0, len(crossings) - 1, 2)]


def segment_stations(start: float, end: float, spacing: float) -> list[float]:
    """Capture stations along one segment, endpoints included.

    A segment shorter than one trigger interval gets a single capture at its
    midpoint.
    """
    length = end - start
    if length < spacing:
        return [(start + end) / 2.0]
    n = math.ceil(length / spacing - _EPS) + 1
    return [start + length * k / (n - 1) for k in range(n)]


def _gap_fills(poly: FieldPolygon, basis: SweepBasis, centers: list[tuple[float, float]]) -> list[Point]:
    """Extra capture points (in sweep coordinates) for grid points the
    footprints miss. Greedy: each fill sits at the centroid of the missed
    points it can reach, or on the first missed point if that centroid is
    outside the field."""

    g = min(basis.footprint_i, basis.footprint_j) / 20.0
    proj = np.array([basis.project(v) for v in poly.vertices])
    (i0, j0), (i1, j1) = proj.min(axis=0), proj.max(axis=0)
    ii, jj = np.meshgrid(np.arange(i0 + g / 2, i1, g), np.arange(j0 + g / 2, j1, g))
    ii, jj = ii.ravel(), jj.ravel()
    xs = ii * basis.i_hat[0] + jj * basis.j_hat[0]
    ys = ii * basis.i_hat[1] + jj * basis.j_hat[1]
    keep = points_in_polygon(xs, ys, poly)
    ii, jj = ii[keep], jj[keep]
    hi, hj = basis.footprint_i / 2.0, basis.footprint_j / 2.0
    missed = np.ones(len(ii), dtype=bool)
    for ci, cj in centers:
        missed &= ~((np.abs(ii - ci) <= hi) & (np.abs(jj - cj) <= hj))
    fills = []
    while missed.any():
        k = int(np.flatnonzero(missed)[0])
        near = missed & (np.abs(ii - ii[k]) <= hi) & (np.abs(jj - jj[k]) <= hj)
        c = (float(ii[near].mean()), float(jj[near].mean()))
        if not point_in_polygon(basis.to_local(*c), poly):
            c = (float(ii[k]), float(jj[k]))
        fills.append(c)
        missed &= ~((np.abs(ii - c[0]) <= hi) & (np.abs(jj - c[1]) <= hj))
    return fills


def _assemble(strips, altitude: float, home: Point | None, flip: bool) -> tuple[list[Waypoint], int, int]:
    """Serpentine waypoint list; returns (waypoints, legs flown, turns)."""
    waypoints: list[Waypoint] = []
    if home is not None:
        waypoints.append(Waypoint(tuple(home), altitude, Action.Transit))
    legs = 0
    run = -1
    for row in strips:
        if not row:
            continue
        row = sorted(row, key=lambda e: e[0], reverse=(legs % 2 == 1) != flip)
        prev_on_leg = False
        for _, _, on_leg, p in row:
            if not (on_leg and prev_on_leg):
                run += 1
            prev_on_leg = on_leg
            waypoints.append(Waypoint(p, altitude, Action.TriggerCapture, run))
        legs += 1
    if home is not None:
        waypoints.append(Waypoint(tuple(home), altitude, Action.Transit))
    return waypoints, legs, max(run, 0)


def plan_mission(poly: FieldPolygon, basis: SweepBasis, altitude: float, speed: float,
                 endurance: float, energy_model: EnergyModel = EnergyModel(),
                 wind: tuple[float, float] = (0.0, 0.0), *, home: Point | None = None,
                 pressure_hpa: float | None = None) -> MissionPlan:
    """Serpentine capture mission with time and energy estimates.

    Stations are spread evenly along each leg's chords through the field.
    A grid check then finds area the footprints miss (acute tips, gaps
    between legs) and adds fill captures, each assigned to the nearest leg.
    ``Waypoint.leg`` numbers straight capture runs: consecutive on-leg
    captures share one, every fill capture has its own, and each change
    costs a turn. Both ends of the first leg are tried as the start and the
    quicker plan is kept.

    Raises :class:`EmptyPlan` if no capture lands in the polygon. A plan that
    overruns ``endurance`` or cannot make headway is returned with
    ``feasible = False`` and the reason in ``issues``.
    """
    if not altitude > 0 or not speed > 0:
        raise ValidationError("altitude and speed must be positive")
    offsets = leg_offsets(poly, basis)
    strips: list[list[tuple[float, float, bool, Point]]] = []   # (along, across, on_leg, point)
    for offset in offsets:
        row = []
        for a, b in leg_segments(poly, basis, offset):
            for u in segment_stations(a, b, basis.trigger_spacing):
                p = basis.to_local(u, offset)
                if point_in_polygon(p, poly):
                    row.append((u, offset, True, p))
        strips.append(row)
    centers = [(u, v) for row in strips for u, v, _, _ in row]
    if centers:
        for u, v in _gap_fills(poly, basis, centers):
            k = min(range(len(offsets)), key=lambda n: abs(offsets[n] - v))
            strips[k].append((u, v, False, basis.to_local(u, v)))

    if not any(strips):
        raise EmptyPlan(f"no capture point falls inside polygon {poly.label!r}")
    # Either end of the first leg may start the sweep; keep the quicker one.
    best = None
    for flip in (False, True):
        waypoints, legs, turns = _assemble(strips, altitude, home, flip)
        path = [w.position for w in waypoints]
        try:
            duration, energy = estimate_energy(path, wind, speed, energy_model,
                                               turns=turns, pressure_hpa=pressure_hpa)
            issue = None
        except InfeasiblePlan as exc:
            duration, energy, issue = math.inf, math.inf, f"InfeasiblePlan: {exc}"
        if best is None or duration < best[3] * (1 - 1e-9):
            best = (waypoints, legs, path, duration, energy, issue)
    waypoints, legs, path, duration, energy, issue = best
    captures = sum(1 for w in waypoints if w.action is Action.TriggerCapture)
    distance = sum(math.dist(a, b) for a, b in zip(path[:-1], path[1:]))
    issues = [issue] if issue else []
    if duration > endurance and not issues:
        issues.append(f"InfeasiblePlan: est. duration {duration:.0f} s exceeds endurance {endurance:.0f} s")
    return MissionPlan(waypoints, captures, distance, duration, energy, tuple(wind),
                       not issues, basis, altitude, speed, tuple(home) if home else None, legs, issues)


def mission_to_json(plan: MissionPlan, frame: LocalFrame | None = None) -> list[dict]:
    rows = []
    for seq, w in enumerate(plan.waypoints):
        row = {"seq": seq, "x_m": w.position[0], "y_m": w.position[1]}
        if frame is not None:
            g = frame.from_local(w.position, alt=w.altitude)
            row.update(lat=g.lat, lon=g.lon)
        else:
            row.update(lat=None, lon=None)
        row.update(alt_m=w.altitude, action=w.action.value)
        rows.append(row)
    return rows


def footprint_coverage(plan: MissionPlan, poly: FieldPolygon, n_points: int = 100_000,
                       rng: np.random.Generator | None = None) -> float:
    """Monte Carlo fraction of the polygon inside the union of capture footprints."""
    from .geo import points_in_polygon

    rng = rng or np.random.default_rng(0)
    x0, y0, x1, y1 = poly.bounds
    pts = []
    while sum(len(p) for p in pts) < n_points:
        xs = rng.uniform(x0, x1, n_points)
        ys = rng.uniform(y0, y1, n_points)
        inside = points_in_polygon(xs, ys, poly)
        pts.append(np.column_stack([xs[inside], ys[inside]]))
    sample = np.concatenate(pts)[:n_points]
    b = plan.basis
    rot = np.array([b.i_hat, b.j_hat])          # rows: along, across
    local = sample @ rot.T
    centers = np.array([w.position for w in plan.captures]) @ rot.T
    half_i, half_j = b.footprint_i / 2 + 1e-9, b.footprint_j / 2 + 1e-9
    covered = np.zeros(len(local), dtype=bool)
    order = np.argsort(local[:, 1])
    local_sorted = local[order]
    for ci, cj in centers:
        lo = np.searchsorted(local_sorted[:, 1], cj - half_j, "left")
        hi = np.searchsorted(local_sorted[:, 1], cj + half_j, "right")
        band = local_sorted[lo:hi]
        hit = np.abs(band[:, 0] - ci) <= half_i
        covered[order[lo:hi][hit]] = True
    return float(covered.mean())


def longest_edge_wind_dir(poly: FieldPolygon) -> float:
    """Wind bearing whose sweep basis runs legs along the polygon's longest edge.

    Used when there is no wind worth aligning to.
    """
    a, b = max(poly.edges(), key=lambda e: math.dist(*e))
    length = math.dist(a, b)
    ix, iy = (b[0] - a[0]) / length, (b[1] - a[1]) / length
    jx, jy = iy, -ix  # i_hat rotated -90 degrees
    return math.degrees(math.atan2(jx, jy)) % 360.0
