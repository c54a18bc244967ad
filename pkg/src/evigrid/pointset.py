"""Grid mapping from labeled 3-D point sets with an explicit ground model.

This path skips the range-image chain: occupancy is decided by height above
a ground model (flat plane, fitted plane or an external height function) and
evidence is accumulated directly in the Cartesian grid.  Free space comes
from the vertical extent of the measurement rays crossing each cell inside
the free-space corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import evidential as ev
from .grids import GridSpec, LayeredGrid
from .measurement import (
    Corridors,
    GaussianIsm,
    LOG_FLOOR,
    OCC_LOG_LAYERS,
    GROUND_LOG_LAYERS,
    masses_from_log_layers,
)


@dataclass
class LabeledPointSet:
    """3-D points with optional semantic labels and label confidences."""

    points: np.ndarray                 # (N, 3) vehicle-frame coordinates
    labels: np.ndarray | None = None   # (N,) semantic codes, -1 unlabeled
    confidence: np.ndarray | None = None
    sensor_origin: np.ndarray = None   # (3,) ray start for free-space tracing

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        n = len(self.points)
        if self.labels is None:
            self.labels = np.full(n, ev.UNLABELED, dtype=np.int16)
        else:
            self.labels = np.asarray(self.labels, dtype=np.int16).reshape(-1)
            if len(self.labels) != n:
                raise ValueError("labels length does not match points")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=float).reshape(-1)
            if len(self.confidence) != n:
                raise ValueError("confidence length does not match points")
        if self.sensor_origin is None:
            self.sensor_origin = np.zeros(3)
        else:
            self.sensor_origin = np.asarray(self.sensor_origin, dtype=float).reshape(3)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GroundModel:
    """Ground height as a function of planar position, with a tolerance band.

    Points within ``delta_g`` of the model height count as ground surface.
    """

    coeffs: tuple | None = (0.0, 0.0, 0.0)   # plane z = a*x + b*y + c
    height_fn: object = None                 # alternative callable f(x, y) -> z
    delta_g: float = 0.3

    @classmethod
    def flat(cls, delta_g: float = 0.3) -> "GroundModel":
        return cls(coeffs=(0.0, 0.0, 0.0), delta_g=delta_g)

    @classmethod
    def from_plane(cls, a: float, b: float, c: float, delta_g: float = 0.3) -> "GroundModel":
        return cls(coeffs=(float(a), float(b), float(c)), delta_g=delta_g)

    @classmethod
    def from_function(cls, fn, delta_g: float = 0.3) -> "GroundModel":
        return cls(coeffs=None, height_fn=fn, delta_g=delta_g)

    def height(self, x, y):
        if self.height_fn is not None:
            return np.asarray(self.height_fn(x, y), dtype=float)
        a, b, c = self.coeffs
        return a * np.asarray(x, dtype=float) + b * np.asarray(y, dtype=float) + c


def fit_plane(points: np.ndarray, cell_size: float = 2.0,
              delta_g: float = 0.3) -> GroundModel:
    """Least-squares ground plane through the lowest point of each coarse cell.

    Raises ``ValueError`` when the candidate set is degenerate (fewer than
    three cells or collinear candidates).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot fit a plane to an empty point set")
    ix = np.floor(pts[:, 0] / cell_size).astype(np.int64)
    iy = np.floor(pts[:, 1] / cell_size).astype(np.int64)
    key = (ix - ix.min()) * (iy.max() - iy.min() + 1) + (iy - iy.min())
    order = np.lexsort((pts[:, 2], key))
    key_sorted = key[order]
    first = np.ones(len(key_sorted), dtype=bool)
    first[1:] = key_sorted[1:] != key_sorted[:-1]
    cand = pts[order][first]
    if len(cand) < 3:
        raise ValueError("not enough ground candidates to fit a plane")
    a = np.column_stack([cand[:, 0], cand[:, 1], np.ones(len(cand))])
    coef, _, rank, _ = np.linalg.lstsq(a, cand[:, 2], rcond=None)
    if rank < 3:
        raise ValueError("ground candidates are degenerate (collinear)")
    return GroundModel.from_plane(coef[0], coef[1], coef[2], delta_g=delta_g)


def classify_points(points: np.ndarray, model: GroundModel,
                    d_z_max: float = 2.5) -> np.ndarray:
    """Binary occupancy per point: above the ground band, below the corridor top."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    dz = pts[:, 2] - model.height(pts[:, 0], pts[:, 1])
    return ((dz > model.delta_g) & (dz < d_z_max)).astype(float)


def _splat_log_gaussian(layer: np.ndarray, spec: GridSpec, points_xy: np.ndarray,
                        origin_xy: np.ndarray, p_occ, p_omega, p_fp: float,
                        sigma: float, log_floor: float = LOG_FLOOR) -> None:
    """Deposit log non-relevance along each point's ray, Gaussian in range.

    For every point the Cartesian cells near it are intersected with the ray
    from the sensor origin; the Gaussian range likelihood integrated over
    each cell's entry/exit interval gives the cell probability.
    """
    n = len(points_xy)
    if n == 0:
        return
    rel = points_xy - origin_xy
    rng = np.hypot(rel[:, 0], rel[:, 1])
    rng = np.maximum(rng, 1e-9)
    dirs = rel / rng[:, None]

    reach = int(math.ceil(6.0 * sigma / min(spec.delta))) + 1
    orng = np.arange(-reach, reach + 1)
    ci = np.floor((points_xy[:, 0] - spec.origin[0]) / spec.delta[0]).astype(np.int64)
    cj = np.floor((points_xy[:, 1] - spec.origin[1]) / spec.delta[1]).astype(np.int64)
    gi = ci[:, None, None] + orng[None, :, None]           # (N, K, 1)
    gj = cj[:, None, None] + orng[None, None, :]           # (N, 1, K)
    k = len(orng)
    gi = np.broadcast_to(gi, (n, k, k))
    gj = np.broadcast_to(gj, (n, k, k))

    x_lo = spec.origin[0] + gi * spec.delta[0]
    y_lo = spec.origin[1] + gj * spec.delta[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_dx = 1.0 / dirs[:, 0]
        inv_dy = 1.0 / dirs[:, 1]
    big = 1e18

    def slab(lo, hi, o, inv):
        # inf * 0 from axis-parallel rays is overwritten below.
        with np.errstate(invalid="ignore"):
            t1 = (lo - o[:, None, None]) * inv[:, None, None]
            t2 = (hi - o[:, None, None]) * inv[:, None, None]
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        parallel = ~np.isfinite(inv)[:, None, None]
        inside = (lo <= o[:, None, None]) & (o[:, None, None] < hi)
        t_lo = np.where(parallel, np.where(inside, -big, big), t_lo)
        t_hi = np.where(parallel, np.where(inside, big, -big), t_hi)
        return t_lo, t_hi

    ox = np.full(n, origin_xy[0])
    oy = np.full(n, origin_xy[1])
    tx_lo, tx_hi = slab(x_lo, x_lo + spec.delta[0], ox, inv_dx)
    ty_lo, ty_hi = slab(y_lo, y_lo + spec.delta[1], oy, inv_dy)
    t_in = np.maximum(np.maximum(tx_lo, ty_lo), 0.0)
    t_out = np.minimum(tx_hi, ty_hi)

    crossed = t_out > t_in
    scale = 1.0 / (np.sqrt(2.0) * sigma)
    pr = 0.5 * (erf((t_out - rng[:, None, None]) * scale)
                - erf((t_in - rng[:, None, None]) * scale))
    pr = np.clip(pr, 0.0, 1.0)
    ok = crossed & (gi >= 0) & (gi < spec.shape[0]) & (gj >= 0) & (gj < spec.shape[1]) \
        & (pr > 0.0)
    p_occ = np.broadcast_to(np.asarray(p_occ, dtype=float)[:, None, None], pr.shape)
    p_omega = np.broadcast_to(np.asarray(p_omega, dtype=float)[:, None, None], pr.shape)
    nr = ev.not_relevant(p_fp, p_occ, p_omega, pr)
    contrib = np.maximum(np.log(np.maximum(nr, 1e-300)), log_floor)
    flat = (np.clip(gi, 0, spec.shape[0] - 1) * spec.shape[1]
            + np.clip(gj, 0, spec.shape[1] - 1))
    layer.ravel()[:] += np.bincount(flat[ok].ravel(), weights=contrib[ok].ravel(),
                                    minlength=layer.size)


def cell_permeability(pointset: LabeledPointSet, model: GroundModel,
                      spec: GridSpec, corridors: Corridors) -> np.ndarray:
    """Corridor coverage per cell from the vertical spread of crossing rays.

    Rays are sampled from the sensor origin to each detection (bounded by
    ``r_max``); samples inside the free-space corridor update a per-cell
    height min/max whose spread, normalized by the corridor height, yields
    the permeability.
    """
    pts = pointset.points
    origin = pointset.sensor_origin
    n = len(pts)
    h_min = np.full(spec.shape, np.inf)
    h_max = np.full(spec.shape, -np.inf)
    if n == 0:
        return np.zeros(spec.shape)

    rel = pts - origin
    planar = np.hypot(rel[:, 0], rel[:, 1])
    planar = np.maximum(planar, 1e-9)
    dx = rel[:, 0] / planar
    dy = rel[:, 1] / planar
    dz = rel[:, 2] / planar
    end = np.minimum(planar, corridors.r_max)

    step = 0.5 * min(spec.delta)
    n_steps = int(math.ceil(float(np.max(end)) / step)) + 1
    # Process points in blocks to bound the sample matrix size.
    block = max(1, int(4e6 // max(n_steps, 1)))
    for start in range(0, n, block):
        sl = slice(start, min(start + block, n))
        ts = (np.arange(n_steps)[None, :] + 0.5) * step
        m = ts <= end[sl, None]
        xs = origin[0] + ts * dx[sl, None]
        ys = origin[1] + ts * dy[sl, None]
        zs = origin[2] + ts * dz[sl, None]
        height = zs - model.height(xs, ys)
        m &= (height >= corridors.f_z_min) & (height <= corridors.f_z_max)
        i, j, inside = spec.cell_index_arrays(xs, ys)
        m &= inside
        if not np.any(m):
            continue
        flat = (i * spec.shape[1] + j)[m]
        np.minimum.at(h_min.ravel(), flat, height[m])
        np.maximum.at(h_max.ravel(), flat, height[m])

    spread = np.where(h_max >= h_min, h_max - h_min, 0.0)
    return np.clip(spread / corridors.free_height, 0.0, 1.0)


def pointset_to_grid(pointset: LabeledPointSet, model: GroundModel,
                     spec: GridSpec, ism: GaussianIsm, corridors: Corridors,
                     p_fp: float = 0.05) -> LayeredGrid:
    """Evidential grid map from a labeled point set.

    Points above the driving corridor are skipped entirely.  Obstacle-class
    points feed occupancy layers, non-occupying points feed ground layers
    with the occupancy switch negated; labels select singleton layers while
    unlabeled points feed the union layers.
    """
    pts = pointset.points
    dz = pts[:, 2] - model.height(pts[:, 0], pts[:, 1])
    keep = dz < corridors.d_z_max
    p_occ = classify_points(pts, model, corridors.d_z_max)

    labels = pointset.labels
    conf = (pointset.confidence if pointset.confidence is not None
            else np.ones(len(pts)))
    origin_xy = pointset.sensor_origin[:2]

    logs = LayeredGrid.zeros(spec, OCC_LOG_LAYERS + GROUND_LOG_LAYERS)

    def splat(mask, layer, p_o, p_w):
        if np.any(mask):
            _splat_log_gaussian(logs.layers[layer], spec, pts[mask, :2], origin_xy,
                                p_o[mask], p_w[mask], p_fp, ism.sigma)

    unlabeled = labels < 0
    p_omega = np.where(unlabeled, 1.0, np.clip(conf, 0.0, 1.0))

    # Points with p_occ = 0 contribute exactly log(1) = 0 here; skip them.
    occupying = keep & (p_occ > 0.0)
    for name in ev.OBJECT_CLASSES:
        splat(occupying & (labels == ev.semantic_code(name)), name, p_occ, p_omega)
    splat(occupying & unlabeled, "object", p_occ, p_omega)

    not_occ = 1.0 - p_occ
    grounded = keep & (p_occ == 0.0)
    for name in ev.GROUND_CLASSES:
        splat(grounded & (labels == ev.semantic_code(name)), name, not_occ, p_omega)
    splat(grounded & unlabeled, "ground", not_occ, p_omega)

    rho = cell_permeability(pointset, model, spec, corridors)

    occ_logs = np.stack([logs.layers[n] for n in OCC_LOG_LAYERS])
    occ_masses = masses_from_log_layers(occ_logs)
    free = (1.0 - occ_masses.sum(axis=0)) * rho
    gnd_logs = np.stack([logs.layers[n] for n in GROUND_LOG_LAYERS])
    gnd_masses = masses_from_log_layers(gnd_logs)

    out = LayeredGrid(spec, {})
    for name in ev.OCCUPANCY.layer_names:
        if name == ev.FREE:
            out.layers[name] = free
        else:
            out.layers[name] = occ_masses[OCC_LOG_LAYERS.index(name)]
    for name, arr in zip(GROUND_LOG_LAYERS, gnd_masses):
        out.layers[name] = arr
    return out
