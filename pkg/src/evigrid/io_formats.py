"""File formats: point cloud / label / disparity loaders and the grid map container.

Loaders follow common automotive dataset conventions:

* point clouds: flat little-endian float32 records of (x, y, z, intensity);
* labels: little-endian uint32 per point, semantic class in the low 16 bits;
* disparity: single-channel 16-bit PNG storing disparity * 256, 0 = unknown.

Grid maps are stored in a simple binary container (magic ``EVGM``) that
round-trips bit-exactly; see ``save_grid_map`` for the layout.
"""

from __future__ import annotations

import struct

import numpy as np

from .grids import GridSpec, LayeredGrid
from .pointset import LabeledPointSet
from .sensors import LidarSensor, SensorReading


class FormatError(ValueError):
    pass


def load_point_cloud(path, labels_path=None, class_map=None,
                     sensor_origin=(0.0, 0.0, 0.0)) -> LabeledPointSet:
    """Read an (x, y, z, intensity) binary cloud, optionally with labels."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % 16 != 0:
        raise FormatError(
            f"{path}: byte length not a multiple of 16 (got {raw.size} bytes)")
    points = raw.view("<f4").reshape(-1, 4)[:, :3].astype(np.float64)
    n = points.shape[0]

    labels = np.full(n, -1, dtype=np.int16)
    confidence = np.ones(n)
    if labels_path is not None:
        codes = np.fromfile(labels_path, dtype="<u4")
        if codes.size != n:
            raise FormatError(
                f"{labels_path}: {codes.size} labels for {n} points")
        semantic = (codes & 0xFFFF).astype(np.int64)
        labels = map_label_codes(semantic, class_map)
    return LabeledPointSet(points=points, labels=labels, confidence=confidence,
                           sensor_origin=np.asarray(sensor_origin, dtype=np.float64))


def map_label_codes(codes, class_map=None) -> np.ndarray:
    """Translate dataset label ids to internal semantic codes (-1 unlabeled)."""
    from . import evidential as ev
    from .config import DEFAULT_CLASS_MAP

    if class_map is None:
        class_map = DEFAULT_CLASS_MAP
    codes = np.asarray(codes, dtype=np.int64)
    out = np.full(codes.shape, -1, dtype=np.int16)
    for code, name in class_map.items():
        out[codes == code] = ev.semantic_code(name)
    return out


def load_disparity_image(path) -> np.ndarray:
    """Read a 16-bit disparity PNG; returns float disparity, NaN = unknown."""
    from PIL import Image

    with Image.open(path) as img:
        if img.mode not in ("I", "I;16", "I;16B"):
            raise FormatError(
                f"{path}: expected a 16-bit single-channel PNG, got mode {img.mode!r}")
        data = np.asarray(img, dtype=np.float64)
    disparity = data / 256.0
    disparity[data == 0] = np.nan
    return disparity


def load_semantic_image(path, class_map=None) -> np.ndarray:
    """Read a per-pixel label PNG (8 or 16 bit ids) into semantic codes."""
    from PIL import Image

    with Image.open(path) as img:
        data = np.asarray(img)
    if data.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel label image")
    return map_label_codes(data, class_map)


def lidar_to_range_image(pointset: LabeledPointSet, sensor: LidarSensor) -> SensorReading:
    """Spherical projection of a point cloud onto the sensor's row/column raster.

    When several points land in one pixel the nearest survives; ties are
    broken by input order so the result is reproducible.
    """
    pts = pointset.points - np.asarray(sensor.origin, dtype=np.float64)
    ranges = np.linalg.norm(pts, axis=1)
    ok = ranges > 1e-9
    azimuth = np.degrees(np.arctan2(pts[:, 1], pts[:, 0])) % 360.0
    with np.errstate(invalid="ignore"):
        elevation = np.degrees(np.arcsin(np.where(ok, pts[:, 2] / np.where(ok, ranges, 1.0), 0.0)))

    u = np.floor(azimuth / 360.0 * sensor.cols).astype(np.int64) % sensor.cols
    span = sensor.fov_up_deg - sensor.fov_down_deg
    vf = (sensor.fov_up_deg - elevation) / span * sensor.rows
    v = np.floor(vf).astype(np.int64)
    ok &= (v >= 0) & (v < sensor.rows)

    range_image = np.full((sensor.rows, sensor.cols), np.nan)
    semantic = np.full((sensor.rows, sensor.cols), -1, dtype=np.int16)
    confidence = np.ones((sensor.rows, sensor.cols))

    idx = np.nonzero(ok)[0]
    flat = v[idx] * sensor.cols + u[idx]
    # Sort by (pixel, range, input order); the first record per pixel wins.
    order = np.lexsort((idx, ranges[idx], flat))
    flat, take = flat[order], idx[order]
    first = np.ones(flat.size, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    flat, take = flat[first], take[first]

    range_image.ravel()[flat] = ranges[take]
    semantic.ravel()[flat] = pointset.labels[take]
    if pointset.confidence is not None:
        confidence.ravel()[flat] = pointset.confidence[take]
    return SensorReading(sensor=sensor, range_image=range_image,
                         semantic=semantic, confidence=confidence)


# ---------------------------------------------------------------------------
# Grid map container

_MAGIC = b"EVGM"
_VERSION = 1


def save_grid_map(path, grid: LayeredGrid) -> None:
    """Write a layered grid to the EVGM container.

    Layout (little endian): magic ``EVGM``; u16 version; f64 origin_u,
    origin_v, delta_u, delta_v; u32 size_u, size_v, layer_count; then per
    layer a null-terminated ASCII name followed by row-major float32 data.
    """
    spec = grid.spec
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<4d", spec.origin[0], spec.origin[1],
                             spec.delta[0], spec.delta[1]))
        fh.write(struct.pack("<3I", spec.shape[0], spec.shape[1], len(grid.layers)))
        for name, data in grid.layers.items():
            fh.write(name.encode("ascii") + b"\x00")
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_grid_map(path) -> LayeredGrid:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 50:
        raise FormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    ou, ov, du, dv = struct.unpack_from("<4d", blob, 6)
    su, sv, layer_count = struct.unpack_from("<3I", blob, 38)
    spec = GridSpec(origin=(ou, ov), delta=(du, dv), shape=(su, sv))
    grid = LayeredGrid(spec)

    offset = 50
    layer_bytes = su * sv * 4
    for _ in range(layer_count):
        end = blob.find(b"\x00", offset)
        if end < 0:
            raise FormatError(f"{path}: unterminated layer name")
        name = blob[offset:end].decode("ascii")
        offset = end + 1
        if offset + layer_bytes > len(blob):
            raise FormatError(f"{path}: truncated data for layer {name!r}")
        data = np.frombuffer(blob, dtype="<f4", count=su * sv, offset=offset)
        grid.layers[name] = data.reshape(su, sv).astype("<f4")
        offset += layer_bytes
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return grid
