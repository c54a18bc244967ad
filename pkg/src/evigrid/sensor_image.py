"""Range-image processing: filtering, surface normals, occupancy, ground height.

The processing chain splits the range image into a height image and a planar
distance image, smooths both with an edge-preserving bilateral filter, picks
adaptive pixel neighbors, estimates oriented surface normals and derives

* ``f_occ``   - per-pixel probability that the reflecting surface occupies
  space (steep surfaces with trustworthy normals), and
* ``f_ground`` - per-pixel height above the locally propagated ground level.

Ground levels are propagated bottom-to-top per image column; the rules keep
horizontal surfaces on top of obstacles (e.g. car roofs) from re-seeding the
ground level unless the measured height drops again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

_COS_45 = math.cos(math.pi / 4.0)
_TIE_EPS = 1e-9


@dataclass(frozen=True)
class ImageParams:
    """Tunables of the range-image chain (defaults suit automotive LiDAR)."""

    sigma_value_height: float = 0.1   # bilateral value sigma for the height image [m]
    sigma_value_dist: float = 0.1     # bilateral value sigma for the distance image [m]
    sigma_spatial: float = 1.5        # bilateral spatial sigma [px]
    filter_radius: int = 2            # bilateral window radius [px]
    max_neighbor_offset: int = 3      # adaptive neighbor search limit [px]
    slope_occupancy: float = 10.0     # logistic slope over the normal polar angle [1/rad]
    slope_confidence: float = 50.0    # logistic slope over neighbor distances [1/m]
    sigma_range: float = 0.03         # range noise scale for LiDAR [m]
    bottom_row_threshold: float = 0.5 # |height above assumed ground| limit, bottom row [m]


def split_range_image(reading) -> tuple:
    """Split a reading into height above sensor origin and planar distance.

    Both outputs are NaN where the range is unknown.
    """
    points = reading.sensor.back_project(reading.range_image)
    rel = points - reading.sensor.origin_array
    height = rel[..., 2]
    dist_xy = np.hypot(rel[..., 0], rel[..., 1])
    unknown = ~reading.valid
    height = np.where(unknown, np.nan, height)
    dist_xy = np.where(unknown, np.nan, dist_xy)
    return height, dist_xy


def bilateral_filter(image: np.ndarray, sigma_value: float, sigma_spatial: float,
                     radius: int = 2, wrap_u: bool = False) -> np.ndarray:
    """Edge-preserving smoothing; unknown (NaN) pixels carry zero weight.

    ``wrap_u`` treats the column axis as periodic (full-sweep LiDAR images).
    Output pixels are unknown exactly where the input is unknown.
    """
    if sigma_value <= 0 or sigma_spatial <= 0:
        raise ValueError("filter sigmas must be positive")
    img = np.asarray(image, dtype=float)
    known = np.isfinite(img)
    vals = np.where(known, img, 0.0)
    acc = np.zeros_like(img)
    weight = np.zeros_like(img)
    inv2_val = 0.5 / (sigma_value * sigma_value)
    inv2_sp = 0.5 / (sigma_spatial * sigma_spatial)
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            w_sp = math.exp(-(dv * dv + du * du) * inv2_sp)
            shifted = _shift2(vals, dv, du, wrap_u)
            shifted_known = _shift2(known.astype(float), dv, du, wrap_u) > 0.5
            diff = shifted - img
            w = np.where(known & shifted_known,
                         w_sp * np.exp(-diff * diff * inv2_val), 0.0)
            acc += w * np.where(shifted_known, shifted, 0.0)
            weight += w
    out = np.full_like(img, np.nan)
    np.divide(acc, weight, out=out, where=weight > 0.0)
    return np.where(known, out, np.nan)


def _shift2(a: np.ndarray, dv: int, du: int, wrap_u: bool) -> np.ndarray:
    """Neighbor image at offset (dv, du); out-of-image pixels become 0/False."""
    out = a
    if du:
        if wrap_u:
            out = np.roll(out, -du, axis=1)
        else:
            out = np.full_like(a, 0.0)
            if du > 0:
                out[:, :-du] = a[:, du:]
            else:
                out[:, -du:] = a[:, :du]
            a = out
    if dv:
        res = np.zeros_like(out)
        if dv > 0:
            res[:-dv, :] = out[dv:, :]
        else:
            res[-dv:, :] = out[:dv, :]
        out = res
    return out


def _shift_points(p: np.ndarray, dv: int, du: int, wrap_u: bool) -> np.ndarray:
    out = p
    if du:
        if wrap_u:
            out = np.roll(out, -du, axis=1)
        else:
            res = np.full_like(out, np.nan)
            if du > 0:
                res[:, :-du] = out[:, du:]
            else:
                res[:, -du:] = out[:, :du]
            out = res
    if dv:
        res = np.full_like(out, np.nan)
        if dv > 0:
            res[:-dv, :] = out[dv:, :]
        else:
            res[-dv:, :] = out[:dv, :]
        out = res
    return out


def select_neighbors(points: np.ndarray, wrap_u: bool = False,
                     max_offset: int = 3) -> tuple:
    """Adaptive horizontal and vertical neighbor per pixel.

    For each pixel the closer (3-D Euclidean) of the next left/right known
    pixels becomes the horizontal neighbor; ties within 1e-9 prefer right.
    Vertically the closer of below/above is used; ties prefer below.  When
    neither side is known at offset 1 the search widens, up to ``max_offset``.

    Returns ``(p_h, d_h, ok_h, p_v, d_v, ok_v)``.
    """
    known = np.all(np.isfinite(points), axis=-1)

    def pick(offsets_a, offsets_b, prefer_b):
        """First-valid-offset candidates for two sides, then nearest-of-two."""
        shape = points.shape[:2]
        cand_a = np.full(points.shape, np.nan)
        cand_b = np.full(points.shape, np.nan)
        got_a = np.zeros(shape, dtype=bool)
        got_b = np.zeros(shape, dtype=bool)
        pending = np.ones(shape, dtype=bool)
        for off_a, off_b in zip(offsets_a, offsets_b):
            pa = _shift_points(points, *off_a, wrap_u)
            pb = _shift_points(points, *off_b, wrap_u)
            va = np.all(np.isfinite(pa), axis=-1)
            vb = np.all(np.isfinite(pb), axis=-1)
            level = pending & (va | vb)
            take_a = level & va
            take_b = level & vb
            cand_a[take_a] = pa[take_a]
            cand_b[take_b] = pb[take_b]
            got_a |= take_a
            got_b |= take_b
            pending &= ~level
        da = np.linalg.norm(cand_a - points, axis=-1)
        db = np.linalg.norm(cand_b - points, axis=-1)
        da = np.where(got_a, da, np.inf)
        db = np.where(got_b, db, np.inf)
        if prefer_b:
            use_b = db <= da + _TIE_EPS
        else:
            use_b = db < da - _TIE_EPS
        chosen = np.where(use_b[..., None], cand_b, cand_a)
        dist = np.where(use_b, db, da)
        ok = (got_a | got_b) & known
        dist = np.where(ok, dist, np.nan)
        chosen = np.where(ok[..., None], chosen, np.nan)
        return chosen, dist, ok

    offsets = range(1, max_offset + 1)
    # Horizontal: left = (0, -o), right = (0, +o); prefer right on ties.
    p_h, d_h, ok_h = pick([(0, -o) for o in offsets], [(0, o) for o in offsets], True)
    # Vertical: above = (-o, 0) (higher elevation), below = (+o, 0); prefer below.
    p_v, d_v, ok_v = pick([(-o, 0) for o in offsets], [(o, 0) for o in offsets], True)
    return p_h, d_h, ok_h, p_v, d_v, ok_v


def surface_normals(points: np.ndarray, p_h: np.ndarray, p_v: np.ndarray,
                    sensor_origin: np.ndarray) -> tuple:
    """Oriented unit normals from pixel/horizontal/vertical point triples.

    The normal is ``(p_h - p) x (p_v - p)``, normalized, and flipped to face
    the sensor origin.  Degenerate (collinear or unknown) triples fail.
    Returns ``(normals, ok)``.
    """
    a = p_h - points
    b = p_v - points
    n = np.cross(a, b)
    norm = np.linalg.norm(n, axis=-1)
    ok = np.isfinite(norm) & (norm > 1e-12)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm[..., None]
    to_sensor = np.asarray(sensor_origin, dtype=float) - points
    flip = np.sum(n * to_sensor, axis=-1) < 0.0
    n = np.where(flip[..., None], -n, n)
    n = np.where(ok[..., None], n, np.nan)
    return n, ok


def occupancy_weight(n_up, slope: float = 10.0):
    """Logistic weight over the normal's polar angle; 0.5 at 45 degrees.

    ``n_up`` is the upright (z) component of the unit normal.  Horizontal
    surfaces (n_up near 1) get weight near 0, vertical surfaces near 1.
    """
    n_up = np.clip(np.asarray(n_up, dtype=float), -1.0, 1.0)
    angle = np.arccos(n_up)
    out = expit(slope * (angle - math.pi / 4.0))
    return float(out) if out.ndim == 0 else out


def normal_confidence(d_h, d_v, sigma_range, slope: float = 50.0):
    """Logistic confidence from the smaller neighbor distance vs. noise scale.

    Neighbor distances near the range noise produce unreliable normals
    (confidence 0.5 exactly at ``sigma_range``).
    """
    d = np.minimum(np.asarray(d_h, dtype=float), np.asarray(d_v, dtype=float))
    out = expit(np.asarray(slope, dtype=float)
                * (d - np.asarray(sigma_range, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def occupancy_probability(n_up, d_h, d_v, sigma_range, slope_occupancy=10.0,
                          slope_confidence=50.0):
    """Per-pixel occupancy probability: confidence-weighted steepness."""
    return (normal_confidence(d_h, d_v, sigma_range, slope_confidence)
            * occupancy_weight(n_up, slope_occupancy))


@dataclass
class GroundEstimate:
    height_above_ground: np.ndarray  # f_ground per pixel, NaN when unseeded/unknown
    ground_level: np.ndarray         # propagated ground height (sensor-relative)
    is_ground: np.ndarray            # pixels classified as ground surface


def ground_height_image(heights: np.ndarray, ranges: np.ndarray,
                        n_up: np.ndarray, mount_height: float,
                        bottom_row_threshold: float = 0.5) -> GroundEstimate:
    """Per-column bottom-to-top ground classification and height propagation.

    A known pixel is an obstacle when any of
      (a) its surface normal is steeper than 45 degrees,
      (b) it is the first known pixel of the column and its height above the
          assumed vehicle ground plane exceeds ``bottom_row_threshold``, or
      (c) its measured range is smaller than the range of the known pixel
          below it (the ray stepped back toward the sensor).

    Before the first obstacle every non-obstacle pixel re-seeds the ground
    level; afterwards a pixel re-seeds only if none of (a)-(c) hold and its
    height decreased versus the pixel below.  ``f_ground`` is the height
    difference to the last propagated ground level (NaN until a column is
    seeded).
    """
    rows, cols = heights.shape
    known = np.isfinite(heights) & np.isfinite(ranges)
    f_ground = np.full((rows, cols), np.nan)
    ground_level = np.full((rows, cols), np.nan)
    is_ground = np.zeros((rows, cols), dtype=bool)

    last_ground = np.full(cols, np.nan)
    seen_obstacle = np.zeros(cols, dtype=bool)
    below_h = np.full(cols, np.nan)
    below_r = np.full(cols, np.nan)

    for v in range(rows - 1, -1, -1):
        k = known[v]
        h = heights[v]
        r = ranges[v]
        first = k & ~np.isfinite(below_r)
        with np.errstate(invalid="ignore"):
            rule_a = k & (n_up[v] < _COS_45)          # NaN normals never trigger (a)
            rule_b = first & (np.abs(h + mount_height) > bottom_row_threshold)
            rule_c = k & ~first & (r < below_r)
            decreased = h < below_h
        obstacle = rule_a | rule_b | rule_c
        ground_now = k & ~obstacle & (~seen_obstacle | decreased)

        last_ground = np.where(ground_now, h, last_ground)
        seen_obstacle |= k & obstacle
        ground_level[v] = last_ground
        f_ground[v] = h - last_ground
        is_ground[v] = ground_now
        below_h = np.where(k, h, below_h)
        below_r = np.where(k, r, below_r)

    return GroundEstimate(height_above_ground=f_ground,
                          ground_level=ground_level, is_ground=is_ground)


@dataclass
class DerivedImages:
    """All per-pixel products of the range-image chain."""

    f_height: np.ndarray       # filtered height above sensor origin
    f_dist_xy: np.ndarray      # filtered planar distance to sensor origin
    points: np.ndarray         # filtered 3-D points (vehicle frame)
    ranges: np.ndarray         # filtered slant ranges
    f_normals: np.ndarray      # oriented unit normals
    normals_ok: np.ndarray
    f_occ: np.ndarray          # occupancy probability, NaN without a normal
    f_ground: np.ndarray       # height above propagated ground, NaN unseeded
    ground_level: np.ndarray   # propagated ground height (sensor-relative)
    is_ground: np.ndarray
    valid: np.ndarray
    raw_height: np.ndarray
    raw_dist_xy: np.ndarray


def reconstruct_points(sensor, heights: np.ndarray, dist_xy: np.ndarray) -> np.ndarray:
    """3-D points from split images using each column's planar ray direction."""
    planar = sensor.planar_direction()  # (cols, 2)
    p = np.empty(heights.shape + (3,))
    p[..., 0] = dist_xy * planar[None, :, 0]
    p[..., 1] = dist_xy * planar[None, :, 1]
    p[..., 2] = heights
    return sensor.origin_array + p


def derive_images(reading, params: ImageParams = ImageParams()) -> DerivedImages:
    """Run the full range-image chain on one reading."""
    sensor = reading.sensor
    wrap = sensor.wraps_u
    raw_h, raw_d = split_range_image(reading)
    f_h = bilateral_filter(raw_h, params.sigma_value_height, params.sigma_spatial,
                           params.filter_radius, wrap_u=wrap)
    f_d = bilateral_filter(raw_d, params.sigma_value_dist, params.sigma_spatial,
                           params.filter_radius, wrap_u=wrap)
    points = reconstruct_points(sensor, f_h, f_d)
    rel = points - sensor.origin_array
    ranges = np.linalg.norm(rel, axis=-1)
    valid = np.all(np.isfinite(points), axis=-1)
    ranges = np.where(valid, ranges, np.nan)

    p_h, d_h, ok_h, p_v, d_v, ok_v = select_neighbors(points, wrap_u=wrap,
                                                      max_offset=params.max_neighbor_offset)
    normals, n_ok = surface_normals(points, p_h, p_v, sensor.origin_array)
    n_ok &= ok_h & ok_v

    if sensor.kind == "stereo":
        sigma = sensor.range_sigma_m(reading.range_image)
    else:
        sigma = params.sigma_range
    with np.errstate(invalid="ignore"):
        f_occ = occupancy_probability(normals[..., 2], d_h, d_v, sigma,
                                      params.slope_occupancy, params.slope_confidence)
    f_occ = np.where(n_ok, f_occ, np.nan)

    ground = ground_height_image(f_h, ranges, normals[..., 2],
                                 mount_height=sensor.origin[2],
                                 bottom_row_threshold=params.bottom_row_threshold)

    return DerivedImages(
        f_height=f_h, f_dist_xy=f_d, points=points, ranges=ranges,
        f_normals=normals, normals_ok=n_ok, f_occ=f_occ,
        f_ground=ground.height_above_ground, ground_level=ground.ground_level,
        is_ground=ground.is_ground, valid=valid,
        raw_height=raw_h, raw_dist_xy=raw_d,
    )
