"""Local metric frames, field polygons, point-in-polygon and camera footprints.

All planar coordinates are meters in a local east (x) / north (y) frame
anchored at a :class:`GeoPoint` origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_M = 6_371_000.0
FRAME_VALIDITY_M = 5_000.0
BOUNDARY_TOL_M = 1e-9

Point = tuple[float, float]


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude out of range: {self.lon}")

    def to_dict(self) -> dict:
        return {"lat": self.lat, "lon": self.lon, "alt": self.alt}

    @classmethod
    def from_dict(cls, d: dict) -> "GeoPoint":
        return cls(float(d["lat"]), float(d["lon"]), float(d.get("alt", 0.0)))


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular tangent approximation around ``origin``.

    Good to centimeters for fields a few kilometers across, which is all
    the planner ever sees.
    """

    origin: GeoPoint
    validity_m: float = FRAME_VALIDITY_M

    @property
    def _meters_per_rad_lon(self) -> float:
        return EARTH_RADIUS_M * math.cos(math.radians(self.origin.lat))

    def to_local(self, p: GeoPoint) -> Point:
        x = math.radians(p.lon - self.origin.lon) * self._meters_per_rad_lon
        y = math.radians(p.lat - self.origin.lat) * EARTH_RADIUS_M
        if math.hypot(x, y) > self.validity_m:
            raise ValidationError(
                f"point {p} is {math.hypot(x, y):.0f} m from frame origin "
                f"(limit {self.validity_m:.0f} m)"
            )
        return (x, y)

    def from_local(self, xy: Sequence[float], alt: float | None = None) -> GeoPoint:
        x, y = float(xy[0]), float(xy[1])
        if math.hypot(x, y) > self.validity_m:
            raise ValidationError(f"local point {xy} beyond frame validity radius")
        lat = self.origin.lat + math.degrees(y / EARTH_RADIUS_M)
        lon = self.origin.lon + math.degrees(x / self._meters_per_rad_lon)
        return GeoPoint(lat, lon, self.origin.alt if alt is None else alt)


def to_local(p: GeoPoint, frame: LocalFrame) -> Point:
    return frame.to_local(p)


def from_local(xy: Sequence[float], frame: LocalFrame, alt: float | None = None) -> GeoPoint:
    return frame.from_local(xy, alt)


def signed_area(vertices: Sequence[Point]) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a: Point, b: Point, p: Point) -> bool:
    return (min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]))


def segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool:
    d1, d2 = _orient(c, d, a), _orient(c, d, b)
    d3, d4 = _orient(a, b, c), _orient(a, b, d)
    if ((d1 > 0) != (d2 > 0) and d1 != 0 and d2 != 0
            and (d3 > 0) != (d4 > 0) and d3 != 0 and d4 != 0):
        return True
    if d1 == 0 and _on_segment(c, d, a):
        return True
    if d2 == 0 and _on_segment(c, d, b):
        return True
    if d3 == 0 and _on_segment(a, b, c):
        return True
    if d4 == 0 and _on_segment(a, b, d):
        return True
    return False


def is_simple(vertices: Sequence[Point]) -> bool:
    """Brute-force check that no two non-adjacent edges touch."""
    n = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


@dataclass(frozen=True)
class FieldPolygon:
    vertices: tuple[Point, ...]
    label: str = "A"

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ValidationError("polygon needs at least 3 vertices")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise ValidationError("polygon has non-finite coordinates")
        for i in range(len(verts)):
            if verts[i] == verts[(i + 1) % len(verts)]:
                raise ValidationError("polygon has repeated consecutive vertices")
        if signed_area(verts) == 0.0:
            raise ValidationError("polygon has zero area")
        if not is_simple(verts):
            raise ValidationError("polygon is self-intersecting")

    @property
    def area(self) -> float:
        return abs(signed_area(self.vertices))

    @property
    def signed_area(self) -> float:
        return signed_area(self.vertices)

    @property
    def centroid(self) -> Point:
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return (float(((x + xn) * cross).sum() / (6 * a)),
                float(((y + yn) * cross).sum() / (6 * a)))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = np.asarray(self.vertices)
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))

    def edges(self) -> Iterable[tuple[Point, Point]]:
        n = len(self.vertices)
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]

    def translated(self, dx: float, dy: float) -> "FieldPolygon":
        return FieldPolygon(tuple((x + dx, y + dy) for x, y in self.vertices), self.label)

    def rotated(self, angle_deg: float, about: Point | None = None) -> "FieldPolygon":
        cx, cy = about if about is not None else self.centroid
        return FieldPolygon(
            tuple(rotate_point(p, angle_deg, (cx, cy)) for p in self.vertices), self.label
        )

    def reversed(self) -> "FieldPolygon":
        return FieldPolygon(tuple(reversed(self.vertices)), self.label)

    def contains(self, p: Sequence[float]) -> bool:
        return point_in_polygon(p, self)


def rotate_point(p: Sequence[float], angle_deg: float, about: Sequence[float] = (0.0, 0.0)) -> Point:
    """Counter-clockwise rotation about ``about``."""
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    dx, dy = p[0] - about[0], p[1] - about[1]
    return (about[0] + c * dx - s * dy, about[1] + s * dx + c * dy)


def _distance_to_segment(p: Sequence[float], a: Point, b: Point) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def point_in_polygon(p: Sequence[float], poly: FieldPolygon, tol: float = BOUNDARY_TOL_M) -> bool:
    """Crossing-number test with boundary points counted as inside.

    A point within ``tol`` meters of any edge is inside. This keeps capture
    points computed on the field edge from flickering out due to rounding.
    """
    if not isinstance(poly, FieldPolygon):
        raise ValidationError("point_in_polygon needs a FieldPolygon")
    px, py = float(p[0]), float(p[1])
    for a, b in poly.edges():
        if _distance_to_segment((px, py), a, b) <= tol:
            return True
    inside = False
    v0x, v0y = poly.vertices[-1]
    v0_above = v0y >= py
    for v1x, v1y in poly.vertices:
        v1_above = v1y >= py
        if v0_above != v1_above:
            # x where the edge crosses the horizontal through p
            x_cross = v1x + (py - v1y) * (v0x - v1x) / (v0y - v1y)
            if x_cross > px:
                inside = not inside
        v0x, v0y, v0_above = v1x, v1y, v1_above
    return inside


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly: FieldPolygon,
                      tol: float = BOUNDARY_TOL_M) -> np.ndarray:
    """Vectorized :func:`point_in_polygon` over coordinate arrays."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    on_edge = np.zeros_like(inside)
    for (ax, ay), (bx, by) in poly.edges():
        above_a = ay >= ys
        above_b = by >= ys
        crosses = above_a != above_b
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = bx + (ys - by) * (ax - bx) / (ay - by)
        inside ^= crosses & (x_cross > xs)
        dx, dy = bx - ax, by - ay
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        on_edge |= np.hypot(xs - (ax + t * dx), ys - (ay + t * dy)) <= tol
    return inside | on_edge


class BandName(str, Enum):
    Blue = "Blue"
    Green = "Green"
    Red = "Red"
    NIR = "NIR"
    RedEdge = "RedEdge"


@dataclass(frozen=True)
class BandSpec:
    name: BandName
    center_nm: float
    half_width_nm: float

    def __post_init__(self):
        object.__setattr__(self, "name", BandName(self.name))
        if self.center_nm <= 0 or self.half_width_nm <= 0:
            raise ValidationError(f"bad band spec {self}")


# Micasense RedEdge-M band set
REDEDGE_BANDS = (
    BandSpec(BandName.Blue, 475.0, 20.0),
    BandSpec(BandName.Green, 560.0, 20.0),
    BandSpec(BandName.Red, 668.0, 10.0),
    BandSpec(BandName.NIR, 840.0, 40.0),
    BandSpec(BandName.RedEdge, 717.0, 10.0),
)


@dataclass(frozen=True)
class CameraModel:
    hfov: float
    vfov: float
    image_width: int = 1280
    image_height: int = 960
    bands: tuple[BandSpec, ...] = field(default=REDEDGE_BANDS)

    def __post_init__(self):
        if not (0 < self.hfov < 180 and 0 < self.vfov < 180):
            raise ValidationError("field of view must be in (0, 180) degrees")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValidationError("image dimensions must be positive")
        bands = tuple(self.bands)
        if not bands:
            raise ValidationError("camera needs at least one band")
        centers = [b.center_nm for b in bands]
        if len(set(centers)) != len(centers):
            raise ValidationError("band centers must be distinct")
        object.__setattr__(self, "bands", bands)

    @property
    def band_names(self) -> list[str]:
        return [b.name.value for b in self.bands]

    def with_resolution(self, width: int, height: int) -> "CameraModel":
        return CameraModel(self.hfov, self.vfov, width, height, self.bands)


# Nominal RedEdge-M lens (5.4 mm focal length, 4.8 x 3.6 mm sensor).
REDEDGE_M = CameraModel(hfov=47.2, vfov=35.4)


def footprint(camera: CameraModel, altitude: float) -> tuple[float, float]:
    """Ground rectangle (width, height) in meters for a nadir camera."""
    if not altitude > 0:
        raise ValidationError(f"altitude must be positive, got {altitude}")
    w = 2.0 * altitude * math.tan(math.radians(camera.hfov) / 2.0)
    h = 2.0 * altitude * math.tan(math.radians(camera.vfov) / 2.0)
    return w, h


def polygon_to_json(poly: FieldPolygon, origin: GeoPoint) -> dict:
    return {
        "origin": origin.to_dict(),
        "label": poly.label,
        "vertices_m": [[x, y] for x, y in poly.vertices],
    }


def polygon_from_json(doc: dict) -> tuple[FieldPolygon, GeoPoint]:
    try:
        origin = GeoPoint.from_dict(doc["origin"])
        verts = tuple((float(x), float(y)) for x, y in doc["vertices_m"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed polygon document: {exc}") from exc
    return FieldPolygon(verts, doc.get("label", "A")), origin


def load_polygon(path: str | Path) -> tuple[FieldPolygon, GeoPoint]:
    return polygon_from_json(json.loads(Path(path).read_text()))


def rectangle(width: float, height: float, x0: float = 0.0, y0: float = 0.0,
              label: str = "A") -> FieldPolygon:
    return FieldPolygon(((x0, y0), (x0 + width, y0), (x0 + width, y0 + height),
                         (x0, y0 + height)), label)
