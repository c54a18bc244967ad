"""Equidistant grids, sensor-aligned grid geometries and the Cartesian warp.

A measurement grid has one axis per sensor column coordinate ``u`` (azimuth
angle, image column) and one axis for a range coordinate ``r`` (planar range,
metric distance or stereo disparity).  A geometry object realizes the mapping
between ``(u, r)`` and top-view Cartesian coordinates ``(x, y)`` in the
vehicle frame, including the planar sensor pose.

:func:`warp_to_cartesian` resamples measurement-grid layers onto a Cartesian
grid.  In ``integrate`` mode the stored cell value is treated as the cell's
total (a density over the source cell), so the warp conserves accumulated
log evidence regardless of cell size differences.  In ``average`` mode the
result is the pre-image mean of the source field, with uncovered parts of the
pre-image counting as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned equidistant 2-D grid: per-axis origin, cell size, cell count.

    Cell ``(i, j)`` covers the half-open box
    ``[origin0 + i*delta0, origin0 + (i+1)*delta0) x [...)``.
    """

    origin: tuple
    delta: tuple
    shape: tuple

    def __post_init__(self):
        if len(self.origin) != 2 or len(self.delta) != 2 or len(self.shape) != 2:
            raise ValueError("GridSpec is two-dimensional")
        if any(d <= 0 for d in self.delta):
            raise ValueError("cell sizes must be positive")
        if any(int(s) != s or s < 1 for s in self.shape):
            raise ValueError("cell counts must be positive integers")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "delta", (float(self.delta[0]), float(self.delta[1])))
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))

    @property
    def upper(self) -> tuple:
        return (self.origin[0] + self.shape[0] * self.delta[0],
                self.origin[1] + self.shape[1] * self.delta[1])

    @property
    def cell_area(self) -> float:
        return self.delta[0] * self.delta[1]

    def cell_of(self, point):
        """Cell index containing ``point`` or None when outside the grid."""
        i = math.floor((point[0] - self.origin[0]) / self.delta[0])
        j = math.floor((point[1] - self.origin[1]) / self.delta[1])
        if 0 <= i < self.shape[0] and 0 <= j < self.shape[1]:
            return (i, j)
        return None

    def cell_index_arrays(self, a0, a1):
        """Vectorized cell lookup: index arrays plus an inside mask.

        Non-finite coordinates are reported outside.  Returned indices are
        clipped into range so they can be used for gathering; mask first.
        """
        a0 = np.asarray(a0, dtype=float)
        a1 = np.asarray(a1, dtype=float)
        finite = np.isfinite(a0) & np.isfinite(a1)
        i = np.floor((np.where(finite, a0, self.origin[0]) - self.origin[0]) / self.delta[0])
        j = np.floor((np.where(finite, a1, self.origin[1]) - self.origin[1]) / self.delta[1])
        inside = finite & (i >= 0) & (i < self.shape[0]) & (j >= 0) & (j < self.shape[1])
        i = np.clip(i, 0, self.shape[0] - 1).astype(np.int64)
        j = np.clip(j, 0, self.shape[1] - 1).astype(np.int64)
        return i, j, inside

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.delta[axis]

    def edges(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.shape[axis] + 1) * self.delta[axis]


@dataclass
class LayeredGrid:
    """Named float layers over a shared :class:`GridSpec`."""

    spec: GridSpec
    layers: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, spec: GridSpec, names) -> "LayeredGrid":
        return cls(spec=spec, layers={n: np.zeros(spec.shape) for n in names})

    def layer(self, name: str) -> np.ndarray:
        return self.layers[name]

    def copy(self) -> "LayeredGrid":
        return LayeredGrid(self.spec, {n: a.copy() for n, a in self.layers.items()})

    def __contains__(self, name: str) -> bool:
        return name in self.layers


@dataclass(frozen=True)
class PlanarPose:
    """Planar rigid transform from sensor frame to vehicle frame."""

    x: float = 0.0
    y: float = 0.0
    yaw_deg: float = 0.0

    def to_vehicle(self, xs, ys):
        yaw = math.radians(self.yaw_deg)
        c, s = math.cos(yaw), math.sin(yaw)
        return c * xs - s * ys + self.x, s * xs + c * ys + self.y

    def to_sensor(self, xv, yv):
        yaw = math.radians(self.yaw_deg)
        c, s = math.cos(yaw), math.sin(yaw)
        dx = np.asarray(xv, dtype=float) - self.x
        dy = np.asarray(yv, dtype=float) - self.y
        return c * dx + s * dy, -s * dx + c * dy


class PolarGeometry:
    """Rotating range sensor: u = azimuth in degrees, r = planar range in m.

    Azimuth 0 lies along the sensor x axis and increases counterclockwise;
    the u axis is periodic with period 360.
    """

    kind = "polar"
    u_period = 360.0

    def __init__(self, pose: PlanarPose = PlanarPose()):
        self.pose = pose

    def to_xy(self, u, r):
        theta = np.deg2rad(np.asarray(u, dtype=float))
        r = np.asarray(r, dtype=float)
        return self.pose.to_vehicle(r * np.cos(theta), r * np.sin(theta))

    def from_xy(self, x, y):
        xs, ys = self.pose.to_sensor(x, y)
        r = np.hypot(xs, ys)
        u = np.rad2deg(np.arctan2(ys, xs)) % 360.0
        return u, r

    def area_scale_from_xy(self, x, y):
        # |d(u, r) / d(x, y)| = (180 / pi) / r
        xs, ys = self.pose.to_sensor(x, y)
        r = np.hypot(xs, ys)
        return np.where(r > 1e-12, (180.0 / np.pi) / np.maximum(r, 1e-12), 0.0)

    def metric_range(self, u, r):
        return np.asarray(r, dtype=float)


class UDistanceGeometry:
    """Monocular camera: u = image column in px, r = planar distance in m."""

    kind = "u_distance"
    u_period = None

    def __init__(self, focal_px: float, center_u: float, pose: PlanarPose = PlanarPose()):
        if focal_px <= 0:
            raise ValueError("focal length must be positive")
        self.focal_px = float(focal_px)
        self.center_u = float(center_u)
        self.pose = pose

    def to_xy(self, u, r):
        nu = (np.asarray(u, dtype=float) - self.center_u) / self.focal_px
        alpha = np.arctan(nu)
        r = np.asarray(r, dtype=float)
        # Image columns grow to the right; the sensor y axis points left.
        return self.pose.to_vehicle(r * np.cos(alpha), -r * np.sin(alpha))

    def from_xy(self, x, y):
        xs, ys = self.pose.to_sensor(x, y)
        ahead = xs > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.center_u - self.focal_px * ys / np.where(ahead, xs, np.nan)
        r = np.where(ahead, np.hypot(xs, ys), np.nan)
        return u, r

    def area_scale_from_xy(self, x, y):
        # |d(u, r) / d(x, y)| = f * r / x^2 in the sensor frame.
        xs, ys = self.pose.to_sensor(x, y)
        ahead = xs > 1e-12
        xs = np.where(ahead, xs, 1.0)
        return np.where(ahead, self.focal_px * np.hypot(xs, ys) / (xs * xs), 0.0)

    def metric_range(self, u, r):
        return np.asarray(r, dtype=float)


class UDisparityGeometry:
    """Stereo camera: u = image column in px, r = disparity in px (> 0)."""

    kind = "u_disparity"
    u_period = None

    def __init__(self, focal_px: float, center_u: float, baseline_m: float,
                 pose: PlanarPose = PlanarPose()):
        if focal_px <= 0 or baseline_m <= 0:
            raise ValueError("focal length and baseline must be positive")
        self.focal_px = float(focal_px)
        self.center_u = float(center_u)
        self.baseline_m = float(baseline_m)
        self.pose = pose

    def to_xy(self, u, r):
        d = np.asarray(r, dtype=float)
        if np.any(d <= 0.0):
            raise ValueError("disparity must be positive")
        z = self.focal_px * self.baseline_m / d
        nu = (np.asarray(u, dtype=float) - self.center_u) / self.focal_px
        return self.pose.to_vehicle(z, -nu * z)

    def from_xy(self, x, y):
        xs, ys = self.pose.to_sensor(x, y)
        ahead = xs > 0.0
        safe = np.where(ahead, xs, np.nan)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = self.focal_px * self.baseline_m / safe
            u = self.center_u - self.focal_px * ys / safe
        return u, d

    def area_scale_from_xy(self, x, y):
        # |d(u, d) / d(x, y)| = f^2 * b / x^3 in the sensor frame.
        xs, _ = self.pose.to_sensor(x, y)
        ahead = xs > 1e-12
        xs = np.where(ahead, xs, 1.0)
        return np.where(ahead, self.focal_px ** 2 * self.baseline_m / xs ** 3, 0.0)

    def metric_range(self, u, r):
        d = np.asarray(r, dtype=float)
        z = self.focal_px * self.baseline_m / np.maximum(d, 1e-12)
        nu = (np.asarray(u, dtype=float) - self.center_u) / self.focal_px
        return z * np.sqrt(1.0 + nu * nu)


class CartesianGeometry:
    """Identity-style geometry: the measurement grid is already Cartesian.

    Used for grids accumulated directly in the vehicle frame (point-set
    mapping) and as the trivial alignment for warp testing.
    """

    kind = "cartesian"
    u_period = None

    def __init__(self, pose: PlanarPose = PlanarPose()):
        self.pose = pose

    def to_xy(self, u, r):
        return self.pose.to_vehicle(np.asarray(u, dtype=float), np.asarray(r, dtype=float))

    def from_xy(self, x, y):
        return self.pose.to_sensor(x, y)

    def area_scale_from_xy(self, x, y):
        return np.ones_like(np.asarray(x, dtype=float))

    def metric_range(self, u, r):
        return np.hypot(np.asarray(u, dtype=float), np.asarray(r, dtype=float))


GEOMETRY_KINDS = ("polar", "u_distance", "u_disparity", "cartesian")


def transform_ur_to_xy(geometry, u, r):
    """Map measurement-grid coordinates to vehicle-frame Cartesian coordinates."""
    return geometry.to_xy(u, r)


def _wrapped_u(geometry, spec: GridSpec, u):
    if geometry.u_period is None:
        return u
    return spec.origin[0] + (u - spec.origin[0]) % geometry.u_period


def warp_to_cartesian(src: LayeredGrid, geometry, dst_spec: GridSpec,
                      mode="integrate", supersample: int = 4):
    """Resample measurement-grid layers onto a Cartesian grid.

    Each destination cell is covered with ``supersample x supersample``
    stratified sample points which are mapped back into the measurement grid.
    Samples carry the local area scale of the inverse mapping so that
    ``integrate`` mode evaluates the pre-image integral of the source density
    (cell value / source cell area) and conserves the layer total.

    ``mode`` applies to every layer, or per layer when given as a dict.
    Returns ``(warped, observed)`` where ``observed`` marks destination cells
    whose pre-image touches the source grid at all.
    """
    n = int(supersample)
    if n < 1:
        raise ValueError("supersample must be >= 1")
    if isinstance(mode, str):
        modes = {name: mode for name in src.layers}
    else:
        modes = dict(mode)
    for name, m in modes.items():
        if m not in ("integrate", "average"):
            raise ValueError(f"unknown warp mode {m!r} for layer {name!r}")

    s0, s1 = dst_spec.shape
    offs = (np.arange(n) + 0.5) / n
    xs = dst_spec.origin[0] + (np.arange(s0)[:, None] + offs[None, :]) * dst_spec.delta[0]
    ys = dst_spec.origin[1] + (np.arange(s1)[:, None] + offs[None, :]) * dst_spec.delta[1]
    x = xs.reshape(-1)[:, None]  # (s0*n, 1)
    y = ys.reshape(-1)[None, :]  # (1, s1*n)
    xb = np.broadcast_to(x, (s0 * n, s1 * n))
    yb = np.broadcast_to(y, (s0 * n, s1 * n))

    u, r = geometry.from_xy(xb, yb)
    u = _wrapped_u(geometry, src.spec, u)
    i, j, inside = src.spec.cell_index_arrays(u, r)
    scale = np.asarray(geometry.area_scale_from_xy(xb, yb), dtype=float)
    scale = np.where(np.isfinite(scale), scale, 0.0)

    def block_sum(a):
        return a.reshape(s0, n, s1, n).sum(axis=(1, 3))

    inside_f = inside.astype(float)
    observed = block_sum(inside_f) > 0.0
    scale_in = scale * inside_f
    scale_total = block_sum(scale)

    out = LayeredGrid(dst_spec, {})
    src_area = src.spec.cell_area
    dst_area = dst_spec.cell_area
    for name, layer in src.layers.items():
        vals = layer[i, j] * inside_f
        if modes[name] == "integrate":
            contrib = block_sum(vals * scale_in) / (n * n)
            out.layers[name] = contrib * (dst_area / src_area)
        else:
            num = block_sum(vals * scale_in)
            with np.errstate(invalid="ignore", divide="ignore"):
                avg = np.where(scale_total > 0.0, num / np.where(scale_total > 0.0, scale_total, 1.0), 0.0)
            out.layers[name] = avg
    return out, observed
