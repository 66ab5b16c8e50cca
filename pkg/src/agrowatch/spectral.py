"""Synthetic multispectral scenes, captures, index rasters and maps.

Grids are indexed ``[row, col]`` with row 0 at the *south* edge, so cell
``(r, c)`` has its center at ``origin + ((c + 0.5) * cell, (r + 0.5) * cell)``.
No-data is NaN throughout. Images written to disk are flipped so north is up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .geo import CameraModel, FieldPolygon, footprint, points_in_polygon

EPS = 1e-6
BANDS = ("Blue", "Green", "Red", "NIR", "RedEdge")


class Region(int, Enum):
    Soil = 0
    Vegetation = 1
    Stressed = 2


# Per-region reflectance, band order as BANDS.
DEFAULT_REFLECTANCE: dict[Region, dict[str, float]] = {
    Region.Vegetation: {"Blue": 0.04, "Green": 0.10, "Red": 0.05, "NIR": 0.80, "RedEdge": 0.45},
    Region.Stressed: {"Blue": 0.06, "Green": 0.12, "Red": 0.12, "NIR": 0.55, "RedEdge": 0.48},
    Region.Soil: {"Blue": 0.15, "Green": 0.20, "Red": 0.25, "NIR": 0.30, "RedEdge": 0.28},
}


@dataclass
class SyntheticScene:
    origin: tuple[float, float]
    resolution: float
    bands: dict[str, np.ndarray]
    labels: np.ndarray

    def __post_init__(self):
        shapes = {b.shape for b in self.bands.values()} | {self.labels.shape}
        if len(shapes) != 1:
            raise ValidationError("scene grids must share one shape")
        for name, b in self.bands.items():
            if np.any((b < 0) | (b > 1)):
                raise ValidationError(f"band {name} reflectance outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def extent(self) -> tuple[float, float]:
        ny, nx = self.shape
        return nx * self.resolution, ny * self.resolution

    def cell_index(self, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.floor((np.asarray(xs) - self.origin[0]) / self.resolution).astype(np.int64)
        r = np.floor((np.asarray(ys) - self.origin[1]) / self.resolution).astype(np.int64)
        ny, nx = self.shape
        ok = (r >= 0) & (r < ny) & (c >= 0) & (c < nx)
        return r, c, ok

    def sample(self, xs, ys) -> dict[str, np.ndarray]:
        """Nearest-cell reflectance at ground points; NaN off the scene."""
        r, c, ok = self.cell_index(xs, ys)
        rr, cc = np.where(ok, r, 0), np.where(ok, c, 0)
        return {name: np.where(ok, band[rr, cc], np.nan) for name, band in self.bands.items()}

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)


def uniform_scene(origin, size: tuple[float, float], resolution: float,
                  reflectance: Mapping[str, float], region: Region = Region.Vegetation) -> SyntheticScene:
    nx = int(round(size[0] / resolution))
    ny = int(round(size[1] / resolution))
    bands = {b: np.full((ny, nx), float(v)) for b, v in reflectance.items()}
    return SyntheticScene(tuple(origin), resolution, bands, np.full((ny, nx), int(region)))


def default_scene(poly: FieldPolygon, seed: int = 0, *, resolution: float = 0.5,
                  margin: float = 30.0, n_stressed: int = 4, n_soil: int = 3,
                  texture_sigma: float = 0.01,
                  reflectance: Mapping[Region, Mapping[str, float]] = DEFAULT_REFLECTANCE) -> SyntheticScene:
    """Field of healthy canopy with stressed and bare patches, soil outside."""
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = poly.bounds
    origin = (math.floor((x0 - margin) / resolution) * resolution,
              math.floor((y0 - margin) / resolution) * resolution)
    nx = int(math.ceil((x1 + margin - origin[0]) / resolution))
    ny = int(math.ceil((y1 + margin - origin[1]) / resolution))
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    inside = points_in_polygon(gx, gy, poly)
    labels = np.where(inside, int(Region.Vegetation), int(Region.Soil))
    span = min(x1 - x0, y1 - y0)
    for region, count in ((Region.Stressed, n_stressed), (Region.Soil, n_soil)):
        for _ in range(count):
            cx, cy = rng.uniform(x0, x1), rng.uniform(y0, y1)
            radius = rng.uniform(0.05, 0.12) * span
            blob = inside & ((gx - cx) ** 2 + (gy - cy) ** 2 <= radius ** 2)
            labels[blob] = int(region)
    bands = {}
    for b in BANDS:
        lut = np.array([reflectance[Region(k)][b] for k in range(3)])
        grid = lut[labels]
        if texture_sigma > 0:
            grid = grid + rng.normal(0.0, texture_sigma, grid.shape)
        bands[b] = np.clip(grid, 0.0, 1.0)
    return SyntheticScene(origin, resolution, bands, labels)


# ------------------------------------------------------------------ captures

@dataclass
class MultispectralCapture:
    capture_id: int
    center: tuple[float, float]
    footprint: tuple[float, float]          # extent along col_axis, row_axis
    col_axis: tuple[float, float]
    row_axis: tuple[float, float]           # image "up", toward row 0
    bands: dict[str, np.ndarray]            # each (height, width)
    nodata: np.ndarray = field(default=None)

    def __post_init__(self):
        shapes = {b.shape for b in self.bands.values()}
        if len(shapes) != 1:
            raise ValidationError("capture bands must share dimensions")
        if self.nodata is None:
            stack = np.stack(list(self.bands.values()))
            self.nodata = np.isnan(stack).any(axis=0)

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.bands.values())).shape

    def pixel_of(self, xs, ys) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(row, col, inside, squared distance to center) for ground points."""
        dx = np.asarray(xs) - self.center[0]
        dy = np.asarray(ys) - self.center[1]
        u = dx * self.col_axis[0] + dy * self.col_axis[1]
        v = dx * self.row_axis[0] + dy * self.row_axis[1]
        w, h = self.footprint
        inside = (np.abs(u) <= w / 2 + 1e-9) & (np.abs(v) <= h / 2 + 1e-9)
        H, W = self.shape
        col = np.clip(np.floor((u / w + 0.5) * W), 0, W - 1).astype(np.int64)
        row = np.clip(np.floor((0.5 - v / h) * H), 0, H - 1).astype(np.int64)
        return row, col, inside, u * u + v * v


def capture_scene(scene: SyntheticScene, camera: CameraModel, center: Sequence[float], basis,
                  altitude: float, *, capture_id: int = 0, illumination: float = 1.0,
                  width: int | None = None, height: int | None = None) -> MultispectralCapture:
    """Sample a nadir capture from ``scene``.

    Image columns follow the axis that carries the camera's horizontal field
    of view. ``illumination`` scales every band alike, so ratio indices are
    unaffected.
    """
    W = width or camera.image_width
    H = height or camera.image_height
    fw, fh = footprint(camera, altitude)
    i_hat, j_hat = tuple(basis.i_hat), tuple(basis.j_hat)
    if abs(basis.footprint_i - fw) <= 1e-9 * max(fw, 1.0):
        col_axis, row_axis = i_hat, j_hat
    else:
        col_axis, row_axis = j_hat, (-i_hat[0], -i_hat[1])
    cols = ((np.arange(W) + 0.5) / W - 0.5) * fw
    rows = (0.5 - (np.arange(H) + 0.5) / H) * fh
    uu, vv = np.meshgrid(cols, rows)
    xs = center[0] + uu * col_axis[0] + vv * row_axis[0]
    ys = center[1] + uu * col_axis[1] + vv * row_axis[1]
    sampled = scene.sample(xs, ys)
    bands = {name: sampled[name] * illumination for name in camera.band_names if name in sampled}
    return MultispectralCapture(capture_id, (float(center[0]), float(center[1])), (fw, fh),
                                col_axis, row_axis, bands)


# ------------------------------------------------------------------- mosaic

@dataclass
class Mosaic:
    origin: tuple[float, float]
    cell_size: float
    bands: dict[str, np.ndarray]
    source: np.ndarray                      # capture index per cell, -1 if uncovered

    @property
    def shape(self) -> tuple[int, int]:
        return self.source.shape

    def coverage_mask(self) -> np.ndarray:
        return self.source >= 0

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def bounds(self) -> tuple[float, float, float, float]:
        ny, nx = self.shape
        return (self.origin[0], self.origin[1],
                self.origin[0] + nx * self.cell_size, self.origin[1] + ny * self.cell_size)

    def as_capture(self, capture_id: int = 0) -> MultispectralCapture:
        """View the mosaic as one north-up capture covering its grid."""
        ny, nx = self.shape
        x0, y0, x1, y1 = self.bounds()
        return MultispectralCapture(capture_id, ((x0 + x1) / 2, (y0 + y1) / 2),
                                    (x1 - x0, y1 - y0), (1.0, 0.0), (0.0, 1.0),
                                    {k: v[::-1].copy() for k, v in self.bands.items()})


def mosaic(captures: Sequence[MultispectralCapture], cell_size: float,
           bounds: tuple[float, float, float, float] | None = None) -> Mosaic:
    """Nearest-capture-center mosaic on a regular grid.

    Each cell takes its value from the capture whose center is closest
    among the captures whose footprint contains the cell center. Ties go to
    the earlier capture.
    """
    if not captures:
        raise ValidationError("cannot mosaic an empty capture list")
    if not cell_size > 0:
        raise ValidationError("cell size must be positive")
    corners = []
    for cap in captures:
        w, h = cap.footprint
        for su in (-0.5, 0.5):
            for sv in (-0.5, 0.5):
                corners.append((cap.center[0] + su * w * cap.col_axis[0] + sv * h * cap.row_axis[0],
                                cap.center[1] + su * w * cap.col_axis[1] + sv * h * cap.row_axis[1]))
    corners = np.array(corners)
    if bounds is None:
        x0 = math.floor(corners[:, 0].min() / cell_size) * cell_size
        y0 = math.floor(corners[:, 1].min() / cell_size) * cell_size
        x1, y1 = corners[:, 0].max(), corners[:, 1].max()
    else:
        x0, y0, x1, y1 = bounds
    nx = max(1, int(math.ceil((x1 - x0) / cell_size - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / cell_size - 1e-9)))
    best = np.full((ny, nx), np.inf)
    src = np.full((ny, nx), -1, dtype=np.int64)
    prow = np.zeros((ny, nx), dtype=np.int64)
    pcol = np.zeros((ny, nx), dtype=np.int64)
    for k, cap in enumerate(captures):
        cc = corners[4 * k: 4 * k + 4]
        c_lo = max(0, int(math.floor((cc[:, 0].min() - x0) / cell_size)) - 1)
        c_hi = min(nx, int(math.ceil((cc[:, 0].max() - x0) / cell_size)) + 1)
        r_lo = max(0, int(math.floor((cc[:, 1].min() - y0) / cell_size)) - 1)
        r_hi = min(ny, int(math.ceil((cc[:, 1].max() - y0) / cell_size)) + 1)
        if c_lo >= c_hi or r_lo >= r_hi:
            continue
        xs = x0 + (np.arange(c_lo, c_hi) + 0.5) * cell_size
        ys = y0 + (np.arange(r_lo, r_hi) + 0.5) * cell_size
        gx, gy = np.meshgrid(xs, ys)
        row, col, inside, d2 = cap.pixel_of(gx, gy)
        win = (slice(r_lo, r_hi), slice(c_lo, c_hi))
        better = inside & (d2 < best[win])
        best[win] = np.where(better, d2, best[win])
        src[win] = np.where(better, k, src[win])
        prow[win] = np.where(better, row, prow[win])
        pcol[win] = np.where(better, col, pcol[win])
    names = list(captures[0].bands)
    out = {name: np.full((ny, nx), np.nan) for name in names}
    for k, cap in enumerate(captures):
        sel = src == k
        if not sel.any():
            continue
        for name in names:
            out[name][sel] = cap.bands[name][prow[sel], pcol[sel]]
    return Mosaic((x0, y0), cell_size, out, src)


# ------------------------------------------------------------------ indices

class IndexKind(str, Enum):
    NDVI = "NDVI"
    NDRE = "NDRE"


@dataclass
class IndexRaster:
    kind: IndexKind
    values: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    cell_size: float = 1.0

    @property
    def nodata(self) -> np.ndarray:
        return np.isnan(self.values)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.values.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)


def normalized_difference(a, b, eps: float = EPS) -> np.ndarray:
    """(a - b) / (a + b) with NaN where the sum is below ``eps`` or inputs are NaN."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"band shapes differ: {a.shape} vs {b.shape}")
    total = a + b
    ok = total >= eps  # False for NaN too
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ok, (a - b) / np.where(ok, total, 1.0), np.nan)
    return np.clip(out, -1.0, 1.0)


def ndvi(nir, red, *, origin=(0.0, 0.0), cell_size: float = 1.0) -> IndexRaster:
    return IndexRaster(IndexKind.NDVI, normalized_difference(nir, red), tuple(origin), cell_size)


def ndre(nir, rededge, *, origin=(0.0, 0.0), cell_size: float = 1.0) -> IndexRaster:
    return IndexRaster(IndexKind.NDRE, normalized_difference(nir, rededge), tuple(origin), cell_size)


def index_from_mosaic(m: Mosaic, kind: IndexKind | str) -> IndexRaster:
    kind = IndexKind(kind)
    other = m.bands["Red"] if kind is IndexKind.NDVI else m.bands["RedEdge"]
    fn = ndvi if kind is IndexKind.NDVI else ndre
    return fn(m.bands["NIR"], other, origin=m.origin, cell_size=m.cell_size)


HIST_BINS = 20


def index_stats(raster: IndexRaster, poly: FieldPolygon | None = None) -> dict:
    """Mean/min/max/histogram over valid cells whose centers lie in ``poly``."""
    vals = raster.values
    if poly is not None:
        gx, gy = raster.cell_centers()
        region = points_in_polygon(gx, gy, poly)
    else:
        region = np.ones(vals.shape, dtype=bool)
    valid = region & ~np.isnan(vals)
    n_region = int(region.sum())
    sel = vals[valid]
    coverage = float(valid.sum() / n_region) if n_region else 0.0
    edges = np.linspace(-1.0, 1.0, HIST_BINS + 1)
    if sel.size == 0:
        return {"kind": raster.kind.value, "empty": True, "mean": None, "min": None, "max": None,
                "histogram": [0] * HIST_BINS, "bin_edges": edges.tolist(),
                "coverage_fraction": coverage, "valid_cells": 0, "region_cells": n_region}
    hist, _ = np.histogram(sel, bins=edges)
    return {"kind": raster.kind.value, "empty": False, "mean": float(sel.mean()),
            "min": float(sel.min()), "max": float(sel.max()), "histogram": hist.tolist(),
            "bin_edges": edges.tolist(), "coverage_fraction": coverage,
            "valid_cells": int(sel.size), "region_cells": n_region}


# --------------------------------------------------------------- map output

def ramp_rgb(values: np.ndarray) -> np.ndarray:
    """Red (-1) to yellow (0) to green (+1); NaN maps to black."""
    v = np.clip(np.asarray(values, dtype=float), -1.0, 1.0)
    r = np.where(v <= 0, 255.0, 255.0 * (1.0 - v))
    g = np.where(v <= 0, 255.0 * (v + 1.0), 255.0)
    rgb = np.stack([r, g, np.zeros_like(r)], axis=-1)
    rgb = np.rint(np.nan_to_num(rgb, nan=0.0)).astype(np.uint8)
    rgb[np.isnan(values)] = 0
    return rgb


def ppm_bytes(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def emit_map(raster: IndexRaster, path: str | Path | None = None, palette: str = "ryg") -> bytes:
    """Binary PPM of the raster, north up."""
    if palette != "ryg":
        raise ValidationError(f"unknown palette {palette!r}")
    data = ppm_bytes(ramp_rgb(raster.values[::-1]))
    if path is not None:
        Path(path).write_bytes(data)
    return data


def emit_rgb(m: Mosaic, path: str | Path | None = None, gain: float = 3.0) -> bytes:
    """True-color PPM of a mosaic (reflectance x ``gain``), north up."""
    stack = np.stack([m.bands["Red"], m.bands["Green"], m.bands["Blue"]], axis=-1)[::-1]
    rgb = np.rint(np.clip(np.nan_to_num(stack * gain, nan=0.0), 0.0, 1.0) * 255).astype(np.uint8)
    data = ppm_bytes(rgb)
    if path is not None:
        Path(path).write_bytes(data)
    return data


# --------------------------------------------------------------- raster I/O

def save_raster(values: np.ndarray, path: str | Path, *, kind: str, origin, cell_size: float) -> tuple[Path, Path]:
    """Header JSON at ``path.json`` plus little-endian f32 grid at ``path.f32``."""
    base = Path(path)
    header = {"kind": kind, "origin": [float(origin[0]), float(origin[1])],
              "cell_size": float(cell_size), "rows": int(values.shape[0]),
              "cols": int(values.shape[1]), "dtype": "<f4", "row_order": "south_to_north",
              "extent_m": [values.shape[1] * cell_size, values.shape[0] * cell_size]}
    hp = base.with_suffix(".json")
    bp = base.with_suffix(".f32")
    hp.write_text(json.dumps(header, indent=2))
    bp.write_bytes(np.asarray(values, dtype="<f4").tobytes())
    return hp, bp


def load_raster(path: str | Path) -> tuple[np.ndarray, dict]:
    base = Path(path)
    header = json.loads(base.with_suffix(".json").read_text())
    data = np.frombuffer(base.with_suffix(".f32").read_bytes(), dtype="<f4")
    values = data.reshape(header["rows"], header["cols"]).astype(float)
    return values, header


def save_index(raster: IndexRaster, path) -> tuple[Path, Path]:
    return save_raster(raster.values, path, kind=raster.kind.value, origin=raster.origin,
                       cell_size=raster.cell_size)


def load_index(path) -> IndexRaster:
    values, h = load_raster(path)
    return IndexRaster(IndexKind(h["kind"]), values, tuple(h["origin"]), h["cell_size"])
