"""Sensor calibrations and the organized range-image container.

A :class:`SensorReading` couples a range image (row-major, NaN marks unknown
pixels) with optional per-pixel semantic labels and label confidences, plus
the calibration needed to back-project pixels into the 3-D vehicle frame.

Two calibrations are provided:

* :class:`LidarSensor` - rotating scanner, full 360 degree azimuth sweep,
  range channel holds the measured (slant) distance in meters.
* :class:`StereoSensor` - forward-looking pinhole stereo rig, range channel
  holds disparity in pixels.

The vehicle frame is x forward, y left, z up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LidarSensor:
    """Rotating LiDAR calibration.

    Row 0 holds the highest elevation (``fov_up_deg``); azimuth grows with
    the column index, counterclockwise from the vehicle x axis.
    """

    rows: int
    cols: int
    fov_up_deg: float
    fov_down_deg: float
    origin: tuple = (0.0, 0.0, 0.0)

    kind = "lidar"
    wraps_u = True

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("image dimensions must be positive")
        if self.fov_up_deg <= self.fov_down_deg:
            raise ValueError("fov_up_deg must exceed fov_down_deg")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def vertical_step_rad(self) -> float:
        return math.radians(self.fov_up_deg - self.fov_down_deg) / self.rows

    def azimuth_deg(self, u=None) -> np.ndarray:
        if u is None:
            u = np.arange(self.cols)
        return (np.asarray(u, dtype=float) + 0.5) * (360.0 / self.cols)

    def elevation_deg(self, v=None) -> np.ndarray:
        if v is None:
            v = np.arange(self.rows)
        step = (self.fov_up_deg - self.fov_down_deg) / self.rows
        return self.fov_up_deg - (np.asarray(v, dtype=float) + 0.5) * step

    def ray_directions(self) -> np.ndarray:
        """Unit ray direction per pixel, shape (rows, cols, 3)."""
        theta = np.deg2rad(self.azimuth_deg())[None, :]
        phi = np.deg2rad(self.elevation_deg())[:, None]
        d = np.empty((self.rows, self.cols, 3))
        d[..., 0] = np.cos(phi) * np.cos(theta)
        d[..., 1] = np.cos(phi) * np.sin(theta)
        d[..., 2] = np.broadcast_to(np.sin(phi), (self.rows, self.cols))
        return d

    def back_project(self, range_image: np.ndarray) -> np.ndarray:
        """Vehicle-frame points per pixel; NaN where the range is unknown."""
        return self.origin_array + self.ray_directions() * range_image[..., None]

    def planar_direction(self) -> np.ndarray:
        """Unit planar (xy) direction per column, shape (cols, 2)."""
        theta = np.deg2rad(self.azimuth_deg())
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def ray_vertical_slope(self) -> np.ndarray:
        """dz per unit planar distance along each pixel ray, shape (rows, cols)."""
        phi = np.deg2rad(self.elevation_deg())[:, None]
        return np.broadcast_to(np.tan(phi), (self.rows, self.cols)).copy()


@dataclass(frozen=True)
class StereoSensor:
    """Forward-looking stereo rig; the range channel stores disparity in px."""

    rows: int
    cols: int
    focal_px: float
    center_u: float
    center_v: float
    baseline_m: float
    origin: tuple = (0.0, 0.0, 0.0)

    kind = "stereo"
    wraps_u = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("image dimensions must be positive")
        if self.focal_px <= 0 or self.baseline_m <= 0:
            raise ValueError("focal length and baseline must be positive")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def vertical_step_rad(self) -> float:
        # Angular extent of one pixel row near the image center.
        return math.atan(1.0 / self.focal_px)

    def _nu(self) -> np.ndarray:
        return (np.arange(self.cols, dtype=float) - self.center_u) / self.focal_px

    def _nv(self) -> np.ndarray:
        return (np.arange(self.rows, dtype=float) - self.center_v) / self.focal_px

    def depth_from_disparity(self, disparity: np.ndarray) -> np.ndarray:
        disp = np.asarray(disparity, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = self.focal_px * self.baseline_m / disp
        return np.where(disp > 0.0, z, np.nan)

    def back_project(self, disparity_image: np.ndarray) -> np.ndarray:
        z = self.depth_from_disparity(disparity_image)
        nu = self._nu()[None, :]
        nv = self._nv()[:, None]
        p = np.empty((self.rows, self.cols, 3))
        p[..., 0] = z
        p[..., 1] = -nu * z
        p[..., 2] = -nv * z
        return self.origin_array + p

    def ray_directions(self) -> np.ndarray:
        nu = self._nu()[None, :]
        nv = self._nv()[:, None]
        d = np.empty((self.rows, self.cols, 3))
        d[..., 0] = 1.0
        d[..., 1] = np.broadcast_to(-nu, (self.rows, self.cols))
        d[..., 2] = np.broadcast_to(-nv, (self.rows, self.cols))
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def planar_direction(self) -> np.ndarray:
        nu = self._nu()
        norm = np.sqrt(1.0 + nu * nu)
        return np.stack([1.0 / norm, -nu / norm], axis=-1)

    def ray_vertical_slope(self) -> np.ndarray:
        nu = self._nu()[None, :]
        nv = self._nv()[:, None]
        return -nv / np.sqrt(1.0 + nu * nu) * np.ones((self.rows, self.cols))

    def range_sigma_m(self, disparity: np.ndarray, disparity_error_px: float = 1.0) -> np.ndarray:
        """Depth uncertainty from disparity error propagation: z^2 * dd / (f * b)."""
        z = self.depth_from_disparity(disparity)
        return z * z * disparity_error_px / (self.focal_px * self.baseline_m)


@dataclass
class SensorReading:
    """Organized range image plus optional per-pixel semantics.

    ``range_image``: float array (rows, cols); NaN = unknown.
    ``semantic``: int16 array of semantic class codes, -1 = unlabeled.
    ``confidence``: float array of label confidences in [0, 1].
    """

    sensor: object
    range_image: np.ndarray
    semantic: np.ndarray | None = None
    confidence: np.ndarray | None = None

    def __post_init__(self):
        shape = (self.sensor.rows, self.sensor.cols)
        self.range_image = np.asarray(self.range_image, dtype=float)
        if self.range_image.shape != shape:
            raise ValueError(f"range image shape {self.range_image.shape} != {shape}")
        if self.semantic is not None:
            self.semantic = np.asarray(self.semantic, dtype=np.int16)
            if self.semantic.shape != shape:
                raise ValueError("semantic image shape mismatch")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=float)
            if self.confidence.shape != shape:
                raise ValueError("confidence image shape mismatch")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.range_image) & (self.range_image > 0.0)
