"""Evidence accumulation in sensor-aligned measurement grids.

Per measurement-grid cell the module keeps one log accumulator per
addressable hypothesis (except free space) holding the summed logs of
per-measurement non-relevance probabilities, plus one permeability layer
describing which fraction of the free-space corridor the measurement rays
traversed unobstructed.

:func:`finalize` warps the accumulators into the Cartesian frame (log layers
conserve evidence, permeability is averaged), converts log sums to belief
masses with a per-frame consistency scaling and derives the free-space mass
from the permeability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import erf

from . import evidential as ev
from .grids import GridSpec, LayeredGrid, warp_to_cartesian

LOG_FLOOR = math.log(1e-9)

# Log-accumulator layers of a measurement grid, one per addressable
# hypothesis that can receive direct evidence (free space is derived from
# permeability; void never receives direct evidence but keeps its layer).
OCC_LOG_LAYERS = (ev.CAR, ev.TWO_WHEELER, ev.PEDESTRIAN, ev.OTHER_MOBILE,
                  ev.IMMOBILE, "object", ev.VOID)
GROUND_LOG_LAYERS = (ev.STREET, ev.SIDEWALK, ev.OTHER_GROUND, "ground")
PERMEABILITY_LAYER = "permeability"
LOG_LAYERS = OCC_LOG_LAYERS + GROUND_LOG_LAYERS

# Mass layers of a finalized evidential grid map, in serialization order.
MAP_LAYERS = ev.OCCUPANCY.layer_names + ev.GROUND.layer_names

_CHUNK_COLS = 64  # fixed accumulation chunk width; keeps merges order-stable


@dataclass(frozen=True)
class Corridors:
    """Vertical extents used by the mapping chain (heights above local ground).

    ``d_z_max`` bounds the driving corridor that obstacles must intersect,
    ``f_z_min``/``f_z_max`` bound the corridor probed for free space, and
    ``r_max`` bounds the planar range of free-space ray tracing.
    """

    d_z_max: float = 2.5
    f_z_min: float = 0.3
    f_z_max: float = 1.8
    r_max: float = 50.0

    def __post_init__(self):
        if not (0.0 <= self.f_z_min < self.f_z_max <= self.d_z_max):
            raise ValueError("need 0 <= f_z_min < f_z_max <= d_z_max")
        if self.r_max <= 0.0:
            raise ValueError("r_max must be positive")

    @property
    def free_height(self) -> float:
        return self.f_z_max - self.f_z_min


@dataclass(frozen=True)
class GaussianIsm:
    """Gaussian range likelihood; cell probability via the error function."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")

    def cell_probability(self, lo, hi, r_measured, sigma=None):
        s = self.sigma if sigma is None else sigma
        scale = 1.0 / (np.sqrt(2.0) * s)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        r = np.asarray(r_measured, dtype=float)
        out = 0.5 * (erf((hi - r) * scale) - erf((lo - r) * scale))
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class IntervalIsm:
    """Uniform likelihood over the span to the vertically adjacent measurement.

    The cell probability is the overlap of the cell's range interval with
    ``[min(r, r_adjacent), max(r, r_adjacent)]`` divided by the cell size.
    A cell fully inside the span gets probability exactly 1.
    """

    delta_r: float

    def __post_init__(self):
        if self.delta_r <= 0.0:
            raise ValueError("delta_r must be positive")

    def cell_probability(self, lo, hi, r_measured, r_adjacent):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        s_lo = np.minimum(np.asarray(r_measured, dtype=float),
                          np.asarray(r_adjacent, dtype=float))
        s_hi = np.maximum(np.asarray(r_measured, dtype=float),
                          np.asarray(r_adjacent, dtype=float))
        overlap = np.minimum(hi, s_hi) - np.maximum(lo, s_lo)
        out = np.clip(overlap / self.delta_r, 0.0, 1.0)
        full = (s_lo <= lo) & (hi <= s_hi)
        out = np.where(full, 1.0, out)
        return out if out.ndim else float(out)


def ism_probability(model, interval, r_measured, r_adjacent=None):
    """Probability that a measurement's reflection lies in a range interval."""
    lo, hi = interval
    if isinstance(model, IntervalIsm):
        if r_adjacent is None:
            raise ValueError("interval model needs the adjacent measurement range")
        out = model.cell_probability(lo, hi, r_measured, r_adjacent)
    else:
        out = model.cell_probability(lo, hi, r_measured)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class IsmConfig:
    occupancy: GaussianIsm
    ground: object  # GaussianIsm | IntervalIsm


def empty_measurement_grid(spec: GridSpec) -> LayeredGrid:
    return LayeredGrid.zeros(spec, LOG_LAYERS + (PERMEABILITY_LAYER,))


def _u_bins(spec: GridSpec, u_coords: np.ndarray, periodic: bool):
    """Column bin per u coordinate; periodic grids wrap modulo the bin count."""
    raw = np.floor((u_coords - spec.origin[0]) / spec.delta[0]).astype(np.int64)
    if periodic:
        return raw % spec.shape[0], np.ones(raw.shape, dtype=bool)
    ok = (raw >= 0) & (raw < spec.shape[0])
    return np.clip(raw, 0, spec.shape[0] - 1), ok


def accumulate_log_gaussian(layer: np.ndarray, spec: GridSpec, u_bin: np.ndarray,
                            r_vals: np.ndarray, p_occ, p_omega, p_fp: float,
                            sigma, log_floor: float = LOG_FLOOR) -> None:
    """Add Gaussian-spread log non-relevance for a batch of measurements.

    ``sigma`` may be scalar or per-measurement.  Contributions further than
    six sigma from the measured range are dropped; per-measurement logs are
    clamped at ``log_floor``.
    """
    if u_bin.size == 0:
        return
    o_r, d_r = spec.origin[1], spec.delta[1]
    n_r = spec.shape[1]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), r_vals.shape)
    k_span = int(np.ceil(6.0 * float(np.max(sigma)) / d_r)) + 1
    k0 = np.floor((r_vals - o_r) / d_r).astype(np.int64)
    offs = np.arange(-k_span, k_span + 1)
    bins = k0[:, None] + offs[None, :]
    lo = o_r + bins * d_r
    hi = lo + d_r
    scale = 1.0 / (np.sqrt(2.0) * sigma[:, None])
    pr = 0.5 * (erf((hi - r_vals[:, None]) * scale) - erf((lo - r_vals[:, None]) * scale))
    pr = np.clip(pr, 0.0, 1.0)
    ok = (bins >= 0) & (bins < n_r) & (pr > 0.0)
    nr = ev.not_relevant(p_fp, np.asarray(p_occ)[:, None],
                         np.asarray(p_omega)[:, None], pr)
    contrib = np.where(ok, np.maximum(np.log(np.maximum(nr, 1e-300)), log_floor), 0.0)
    flat = u_bin[:, None] * n_r + np.clip(bins, 0, n_r - 1)
    layer.ravel()[:] += np.bincount(flat[ok].ravel(), weights=contrib[ok].ravel(),
                                    minlength=layer.size)


_MAX_SPAN_CELLS = 64  # memory guard for degenerate interval spans


def accumulate_log_interval(layer: np.ndarray, spec: GridSpec, u_bin: np.ndarray,
                            r_vals: np.ndarray, r_adjacent: np.ndarray, p_occ,
                            p_omega, p_fp: float, log_floor: float = LOG_FLOOR) -> None:
    """Add interval-spread log non-relevance for a batch of measurements."""
    if u_bin.size == 0:
        return
    o_r, d_r = spec.origin[1], spec.delta[1]
    n_r = spec.shape[1]
    s_lo = np.minimum(r_vals, r_adjacent)
    s_hi = np.maximum(r_vals, r_adjacent)
    k_lo = np.floor((s_lo - o_r) / d_r).astype(np.int64)
    span_cells = np.minimum(np.ceil((s_hi - s_lo) / d_r).astype(np.int64) + 1,
                            _MAX_SPAN_CELLS)
    k_max = int(np.max(span_cells)) if span_cells.size else 0
    offs = np.arange(k_max + 1)
    bins = k_lo[:, None] + offs[None, :]
    lo = o_r + bins * d_r
    hi = lo + d_r
    overlap = np.minimum(hi, s_hi[:, None]) - np.maximum(lo, s_lo[:, None])
    pr = np.clip(overlap / d_r, 0.0, 1.0)
    full = (s_lo[:, None] <= lo) & (hi <= s_hi[:, None])
    pr = np.where(full, 1.0, pr)
    ok = (bins >= 0) & (bins < n_r) & (pr > 0.0) & (offs[None, :] <= span_cells[:, None])
    nr = ev.not_relevant(p_fp, np.asarray(p_occ)[:, None],
                         np.asarray(p_omega)[:, None], pr)
    contrib = np.where(ok, np.maximum(np.log(np.maximum(nr, 1e-300)), log_floor), 0.0)
    flat = u_bin[:, None] * n_r + np.clip(bins, 0, n_r - 1)
    layer.ravel()[:] += np.bincount(flat[ok].ravel(), weights=contrib[ok].ravel(),
                                    minlength=layer.size)


def _pixel_grid_coords(reading, derived, geometry):
    """Per-pixel (u, r) coordinates on the measurement grid for a reading."""
    sensor = reading.sensor
    rows, cols = reading.range_image.shape
    if geometry.kind == "polar":
        u = np.broadcast_to(sensor.azimuth_deg()[None, :], (rows, cols))
        r = derived.f_dist_xy
    elif geometry.kind == "u_disparity":
        u = np.broadcast_to(np.arange(cols, dtype=float)[None, :], (rows, cols))
        # Re-derive disparity from the filtered forward depth so the grid
        # coordinate matches the filtered geometry used elsewhere.
        xs, ys = geometry.pose.to_sensor(derived.points[..., 0], derived.points[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = sensor.focal_px * sensor.baseline_m / xs
        r = np.where(xs > 0.0, r, np.nan)
    elif geometry.kind == "u_distance":
        u = np.broadcast_to(np.arange(cols, dtype=float)[None, :], (rows, cols))
        r = derived.f_dist_xy
    else:
        raise ValueError(f"unsupported measurement geometry {geometry.kind!r}")
    return u, r


def _occupancy_targets(semantic):
    """Occupancy log layer per pixel: object singletons, else the union layer."""
    target = np.full(semantic.shape, OCC_LOG_LAYERS.index("object"), dtype=np.int8)
    eligible = np.ones(semantic.shape, dtype=bool)
    for code, name in enumerate(ev.SEMANTIC_CLASSES):
        mask = semantic == code
        if name in ev.OBJECT_CLASSES:
            target[mask] = OCC_LOG_LAYERS.index(name)
        else:
            eligible[mask] = False  # ground-labeled pixels carry no object evidence
    return target, eligible


def _ground_targets(semantic):
    target = np.full(semantic.shape, GROUND_LOG_LAYERS.index("ground"), dtype=np.int8)
    eligible = np.ones(semantic.shape, dtype=bool)
    for code, name in enumerate(ev.SEMANTIC_CLASSES):
        mask = semantic == code
        if name in ev.GROUND_CLASSES:
            target[mask] = GROUND_LOG_LAYERS.index(name)
        else:
            eligible[mask] = False
    return target, eligible


def _column_chunks(cols: int):
    for start in range(0, cols, _CHUNK_COLS):
        yield start, min(start + _CHUNK_COLS, cols)


def accumulate(reading, derived, geometry, spec: GridSpec, isms: IsmConfig,
               corridors: Corridors, p_fp: float = 0.05, workers: int = 1) -> LayeredGrid:
    """Accumulate one reading's evidence into a fresh measurement grid.

    Occupancy evidence comes from known pixels whose height above the local
    ground lies inside the driving corridor; ground evidence comes from
    ground-classified pixels with the occupancy probability negated.
    Labeled pixels feed their class singleton layer, unlabeled pixels the
    matching union layer.
    """
    grid = empty_measurement_grid(spec)
    rows, cols = reading.range_image.shape
    u_coords, r_coords = _pixel_grid_coords(reading, derived, geometry)
    semantic = (reading.semantic if reading.semantic is not None
                else np.full((rows, cols), ev.UNLABELED, dtype=np.int16))
    confidence = (reading.confidence if reading.confidence is not None
                  else np.ones((rows, cols)))

    base = (derived.valid & np.isfinite(r_coords) & np.isfinite(derived.f_occ))
    occ_sel = (base & np.isfinite(derived.f_ground)
               & (derived.f_ground >= 0.0) & (derived.f_ground < corridors.d_z_max))
    gnd_sel = base & derived.is_ground

    occ_target, occ_ok = _occupancy_targets(semantic)
    gnd_target, gnd_ok = _ground_targets(semantic)
    labeled = semantic >= 0
    p_omega = np.where(labeled, confidence, 1.0)

    # Gaussian sigma lives in grid range units (meters for polar grids,
    # pixels for disparity grids).
    sigma_occ = np.full((rows, cols), isms.occupancy.sigma)

    use_interval = isinstance(isms.ground, IntervalIsm)
    if use_interval:
        if reading.sensor.kind == "lidar":
            raise ValueError("interval model is only valid for camera sensors")
        r_below = np.full((rows, cols), np.nan)
        r_below[:-1, :] = r_coords[1:, :]
    sigma_gnd = None if use_interval else np.full((rows, cols), isms.ground.sigma)

    periodic = geometry.u_period is not None

    def run_chunk(bounds):
        c0, c1 = bounds
        part = LayeredGrid.zeros(spec, LOG_LAYERS)
        sl = np.s_[:, c0:c1]

        def batch(select, target_idx, layer_names, p_occ_img, sigma_img, interval_pair):
            for li, lname in enumerate(layer_names):
                m = select & (target_idx == li)
                msel = m[sl]
                if not np.any(msel):
                    continue
                u_bin, u_ok = _u_bins(spec, u_coords[sl][msel], periodic)
                r_v = r_coords[sl][msel]
                p_o = p_occ_img[sl][msel]
                p_w = np.clip(p_omega[sl][msel], 0.0, 1.0)
                keep = u_ok & np.isfinite(r_v)
                if interval_pair is None:
                    accumulate_log_gaussian(part.layers[lname], spec, u_bin[keep],
                                            r_v[keep], np.clip(p_o[keep], 0, 1),
                                            p_w[keep], p_fp, sigma_img[sl][msel][keep])
                else:
                    r_adj = interval_pair[sl][msel]
                    keep &= np.isfinite(r_adj)
                    accumulate_log_interval(part.layers[lname], spec, u_bin[keep],
                                            r_v[keep], r_adj[keep],
                                            np.clip(p_o[keep], 0, 1), p_w[keep], p_fp)

        batch(occ_sel & occ_ok, occ_target, OCC_LOG_LAYERS, derived.f_occ,
              sigma_occ, None)
        p_not_occ = 1.0 - derived.f_occ
        if use_interval:
            batch(gnd_sel & gnd_ok, gnd_target, GROUND_LOG_LAYERS, p_not_occ,
                  None, r_below)
        else:
            batch(gnd_sel & gnd_ok, gnd_target, GROUND_LOG_LAYERS, p_not_occ,
                  sigma_gnd, None)
        return part

    chunks = list(_column_chunks(cols))
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    for part in parts:  # fixed merge order keeps results worker-count invariant
        for name in LOG_LAYERS:
            grid.layers[name] += part.layers[name]

    grid.layers[PERMEABILITY_LAYER][:] = ray_permeability(
        reading, derived, geometry, spec, corridors, workers=workers)
    return grid


def ray_permeability(reading, derived, geometry, spec: GridSpec,
                     corridors: Corridors, workers: int = 1) -> np.ndarray:
    """Fraction of the free-space corridor swept by unobstructed rays, per cell.

    Every pixel ray is clipped to the corridor ``[f_z_min, f_z_max]`` above
    the locally propagated ground and to ``r_max`` (rays without a return
    probe the whole clipped corridor).  Start/end markers per traversed
    column interval are integrated with a running sum; multiplying the ray
    count by the local ray height (range times the vertical beam step)
    yields the swept height, normalized by the corridor height and clamped
    to [0, 1].
    """
    sensor = reading.sensor
    rows, cols = reading.range_image.shape
    u_coords, r_coords = _pixel_grid_coords(reading, derived, geometry)
    slope = sensor.ray_vertical_slope()
    z0 = sensor.origin[2]
    ground_abs = derived.ground_level  # sensor-relative ground height
    # Absolute corridor bounds per pixel ray.
    corridor_lo = ground_abs + z0 + corridors.f_z_min
    corridor_hi = ground_abs + z0 + corridors.f_z_max

    known = derived.valid & np.isfinite(r_coords)
    planar_end = np.where(known, derived.f_dist_xy, corridors.r_max)
    planar_end = np.minimum(planar_end, corridors.r_max)
    usable = np.isfinite(ground_abs) & np.isfinite(planar_end)

    # Planar interval [s1, s2] where the ray height lies inside the corridor.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (corridor_lo - z0) / slope
        t_hi = (corridor_hi - z0) / slope
    s1 = np.where(slope > 0, t_lo, t_hi)
    s2 = np.where(slope > 0, t_hi, t_lo)
    level = np.abs(slope) < 1e-12
    inside_level = (corridor_lo <= z0) & (z0 <= corridor_hi)
    s1 = np.where(level, np.where(inside_level, 0.0, np.inf), s1)
    s2 = np.where(level, np.where(inside_level, np.inf, -np.inf), s2)
    s1 = np.maximum(s1, 1e-6)
    s2 = np.minimum(s2, planar_end)
    usable &= s2 > s1

    periodic = geometry.u_period is not None
    counts = np.zeros((spec.shape[0], spec.shape[1] + 1))

    def mark_chunk(bounds):
        c0, c1 = bounds
        part = np.zeros_like(counts)
        sl = np.s_[:, c0:c1]
        m = usable[sl]
        if not np.any(m):
            return part
        uu = u_coords[sl][m]
        a = _grid_r(geometry, spec, uu, s1[sl][m], sensor)
        b = _grid_r(geometry, spec, uu, s2[sl][m], sensor)
        g_lo = np.minimum(a, b)
        g_hi = np.maximum(a, b)
        finite = np.isfinite(g_lo) & np.isfinite(g_hi)
        g_lo = np.where(finite, g_lo, 0.0)
        g_hi = np.where(finite, g_hi, 0.0)
        u_bin, u_ok = _u_bins(spec, uu, periodic)
        o_r, d_r = spec.origin[1], spec.delta[1]
        n_r = spec.shape[1]
        bin_lo = np.floor((g_lo - o_r) / d_r).astype(np.int64)
        bin_hi = np.floor((g_hi - o_r) / d_r).astype(np.int64)
        ok = u_ok & finite & (bin_hi >= 0) & (bin_lo < n_r)
        bin_lo = np.clip(bin_lo, 0, n_r - 1)
        bin_hi = np.clip(bin_hi, 0, n_r - 1)
        size = part.size
        flat = part.ravel()
        width = n_r + 1
        flat += np.bincount((u_bin[ok] * width + bin_lo[ok]).ravel(),
                            minlength=size).astype(float)
        flat -= np.bincount((u_bin[ok] * width + bin_hi[ok] + 1).ravel(),
                            minlength=size).astype(float)
        return part.reshape(counts.shape)

    chunks = list(_column_chunks(cols))
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(mark_chunk, chunks))
    else:
        parts = [mark_chunk(c) for c in chunks]
    for part in parts:
        counts += part

    crossing = np.cumsum(counts[:, :-1], axis=1)
    u_centers = spec.centers(0)[:, None]
    r_centers = spec.centers(1)[None, :]
    local_height = geometry.metric_range(u_centers, r_centers) * sensor.vertical_step_rad
    swept = crossing * local_height
    return np.clip(swept / corridors.free_height, 0.0, 1.0)


def _grid_r(geometry, spec, u_coords, planar_s, sensor):
    """Convert planar range along a ray into the grid's r coordinate."""
    if geometry.kind == "u_disparity":
        nu = (u_coords - sensor.center_u) / sensor.focal_px
        x_fwd = planar_s / np.sqrt(1.0 + nu * nu)
        with np.errstate(divide="ignore", invalid="ignore"):
            return sensor.focal_px * sensor.baseline_m / x_fwd
    return planar_s


def masses_from_log_layers(log_stack: np.ndarray) -> np.ndarray:
    """Convert stacked log accumulators of one frame into scaled belief masses.

    ``log_stack`` has shape (layers, ...).  Raw masses ``1 - exp(h)`` are
    scaled so the per-cell mass sum equals ``1 - exp(sum(h))``, the mass of
    the combined evidence; cells without evidence keep scale 1.
    """
    raw = -np.expm1(log_stack)
    combined = -np.expm1(log_stack.sum(axis=0))
    denom = raw.sum(axis=0)
    scale = np.where(denom > 0.0, combined / np.where(denom > 0.0, denom, 1.0), 1.0)
    return raw * scale[None, ...]


def finalize(measurement: LayeredGrid, geometry, dst_spec: GridSpec,
             supersample: int = 4) -> LayeredGrid:
    """Warp a measurement grid to the Cartesian frame and form belief masses.

    Log layers are warped in evidence-conserving integrate mode, the
    permeability in average mode.  Free-space mass is the unassigned
    occupancy mass times the mean permeability.
    """
    modes = {name: "integrate" for name in LOG_LAYERS}
    modes[PERMEABILITY_LAYER] = "average"
    src = LayeredGrid(measurement.spec,
                      {n: measurement.layers[n] for n in LOG_LAYERS + (PERMEABILITY_LAYER,)})
    warped, observed = warp_to_cartesian(src, geometry, dst_spec, modes, supersample)

    occ_logs = np.stack([warped.layers[n] for n in OCC_LOG_LAYERS])
    occ_masses = masses_from_log_layers(occ_logs)
    rho = np.clip(np.where(observed, warped.layers[PERMEABILITY_LAYER], 0.0), 0.0, 1.0)
    free = (1.0 - occ_masses.sum(axis=0)) * rho

    gnd_logs = np.stack([warped.layers[n] for n in GROUND_LOG_LAYERS])
    gnd_masses = masses_from_log_layers(gnd_logs)

    out = LayeredGrid(dst_spec, {})
    for name in ev.OCCUPANCY.layer_names:
        if name == ev.FREE:
            out.layers[name] = free
        else:
            out.layers[name] = occ_masses[OCC_LOG_LAYERS.index(name)]
    for name, arr in zip(GROUND_LOG_LAYERS, gnd_masses):
        out.layers[name] = arr
    return out


def map_reading(reading, derived, geometry, measurement_spec: GridSpec,
                cartesian_spec: GridSpec, isms: IsmConfig, corridors: Corridors,
                p_fp: float = 0.05, supersample: int = 4, workers: int = 1) -> LayeredGrid:
    """Full measurement-grid chain: accumulate, trace rays, warp, finalize."""
    grid = accumulate(reading, derived, geometry, measurement_spec, isms,
                      corridors, p_fp=p_fp, workers=workers)
    return finalize(grid, geometry, cartesian_spec, supersample=supersample)
