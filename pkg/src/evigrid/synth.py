"""Synthetic scenes with exact ray casting, used as test and demo oracles.

A scene is a ground plane ``z = a*x + b*y + c`` plus axis-aligned boxes and
vertical wall segments, each carrying a semantic label.  Rendering
intersects every sensor ray with every primitive in closed form, so ranges,
labels and surface normals are exact up to floating point; optional
additive Gaussian range noise is seeded and reproducible.

:func:`true_grid` classifies Cartesian cells as occupied, free or void from
the same closed-form geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import evidential as ev
from .grids import GridSpec
from .sensors import LidarSensor, StereoSensor, SensorReading

FREE_CELL = 0
OCCUPIED_CELL = 1
VOID_CELL = 2


@dataclass(frozen=True)
class GroundPlane:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    label: str = ev.STREET

    def height(self, x, y):
        return self.a * np.asarray(x, float) + self.b * np.asarray(y, float) + self.c

    @property
    def normal(self) -> np.ndarray:
        n = np.array([-self.a, -self.b, 1.0])
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class Box:
    """Axis-aligned cuboid given by center and full edge lengths."""

    center: tuple
    size: tuple
    label: str = ev.CAR

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError("box sizes must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - 0.5 * np.asarray(self.size)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + 0.5 * np.asarray(self.size)


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle over the segment (x1, y1) - (x2, y2)."""

    p1: tuple
    p2: tuple
    height: float
    label: str = ev.IMMOBILE
    z_base: float | None = None  # defaults to the ground height at the midpoint

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("wall height must be positive")
        object.__setattr__(self, "p1", (float(self.p1[0]), float(self.p1[1])))
        object.__setattr__(self, "p2", (float(self.p2[0]), float(self.p2[1])))


@dataclass(frozen=True)
class Scene:
    ground: GroundPlane = GroundPlane()
    boxes: tuple = ()
    walls: tuple = ()

    def wall_z_span(self, wall: Wall) -> tuple:
        if wall.z_base is not None:
            base = wall.z_base
        else:
            mid = (0.5 * (wall.p1[0] + wall.p2[0]), 0.5 * (wall.p1[1] + wall.p2[1]))
            base = float(self.ground.height(*mid))
        return base, base + wall.height

    def shifted(self, dx: float, dy: float) -> "Scene":
        """Scene as seen from a sensor moved by (dx, dy) that stays on the ground.

        Primitives are translated by (-dx, -dy) and the whole scene is lowered
        so the ground passes through z = 0 at the new origin (the vehicle
        keeps resting on the ground).
        """
        g = self.ground
        c_shifted = g.c + g.a * dx + g.b * dy
        dz = -c_shifted
        boxes = tuple(replace(b, center=(b.center[0] - dx, b.center[1] - dy,
                                         b.center[2] + dz)) for b in self.boxes)
        walls = []
        for w in self.walls:
            base, _ = self.wall_z_span(w)
            walls.append(replace(w, p1=(w.p1[0] - dx, w.p1[1] - dy),
                                 p2=(w.p2[0] - dx, w.p2[1] - dy), z_base=base + dz))
        return Scene(ground=GroundPlane(g.a, g.b, 0.0, g.label),
                     boxes=boxes, walls=tuple(walls))


@dataclass
class RenderResult:
    reading: SensorReading
    points: np.ndarray       # exact hit points, NaN where no hit
    normals: np.ndarray      # exact surface normals at the hits
    hit_mask: np.ndarray


def _intersect_ground(origin, dirs, plane: GroundPlane):
    denom = dirs[..., 2] - plane.a * dirs[..., 0] - plane.b * dirs[..., 1]
    num = plane.a * origin[0] + plane.b * origin[1] + plane.c - origin[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    t = np.where((np.abs(denom) > 1e-15) & (t > 1e-9), t, np.inf)
    return t


def _intersect_box(origin, dirs, box: Box):
    lo, hi = box.lo, box.hi
    t_near = np.full(dirs.shape[:-1], -np.inf)
    t_far = np.full(dirs.shape[:-1], np.inf)
    axis_near = np.zeros(dirs.shape[:-1], dtype=np.int8)
    for ax in range(3):
        d = dirs[..., ax]
        o = origin[ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[ax] - o) / d
            t2 = (hi[ax] - o) / d
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        parallel = np.abs(d) < 1e-15
        outside = parallel & ((o < lo[ax]) | (o > hi[ax]))
        t_lo = np.where(parallel, -np.inf, t_lo)
        t_hi = np.where(parallel, np.inf, t_hi)
        better = t_lo > t_near
        axis_near = np.where(better, ax, axis_near)
        t_near = np.maximum(t_near, t_lo)
        t_far = np.minimum(t_far, t_hi)
        t_far = np.where(outside, -np.inf, t_far)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    t = np.where(hit, t_near, np.inf)
    normals = np.zeros(dirs.shape)
    for ax in range(3):
        sel = hit & (axis_near == ax)
        normals[sel, ax] = -np.sign(dirs[sel, ax])
    return t, normals


def _intersect_wall(origin, dirs, wall: Wall, z_span):
    dx = wall.p2[0] - wall.p1[0]
    dy = wall.p2[1] - wall.p1[1]
    length = math.hypot(dx, dy)
    if length < 1e-12:
        raise ValueError("wall segment is degenerate")
    n = np.array([-dy / length, dx / length, 0.0])
    denom = dirs[..., 0] * n[0] + dirs[..., 1] * n[1]
    num = (wall.p1[0] - origin[0]) * n[0] + (wall.p1[1] - origin[1]) * n[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    px = origin[0] + t * dirs[..., 0]
    py = origin[1] + t * dirs[..., 1]
    pz = origin[2] + t * dirs[..., 2]
    s = ((px - wall.p1[0]) * dx + (py - wall.p1[1]) * dy) / (length * length)
    hit = (np.abs(denom) > 1e-15) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0) \
        & (pz >= z_span[0]) & (pz <= z_span[1])
    t = np.where(hit, t, np.inf)
    normals = np.broadcast_to(n, dirs.shape).copy()
    # Face the incoming ray.
    flip = denom > 0
    normals[flip] = -normals[flip]
    return t, normals


def render(scene: Scene, sensor, noise_sigma: float = 0.0, seed: int = 0) -> RenderResult:
    """Cast every sensor ray against the scene; nearest hit wins."""
    origin = sensor.origin_array
    dirs = sensor.ray_directions()
    best_t = _intersect_ground(origin, dirs, scene.ground)
    g_norm = scene.ground.normal
    best_n = np.broadcast_to(g_norm, dirs.shape).copy()
    best_label = np.full(dirs.shape[:-1], ev.semantic_code(scene.ground.label),
                         dtype=np.int16)

    for prim in scene.boxes:
        t, n = _intersect_box(origin, dirs, prim)
        closer = t < best_t
        best_n = np.where(closer[..., None], n, best_n)
        best_label = np.where(closer, ev.semantic_code(prim.label), best_label)
        best_t = np.minimum(best_t, t)
    for prim in scene.walls:
        t, n = _intersect_wall(origin, dirs, prim, scene.wall_z_span(prim))
        closer = t < best_t
        best_n = np.where(closer[..., None], n, best_n)
        best_label = np.where(closer, ev.semantic_code(prim.label), best_label)
        best_t = np.minimum(best_t, t)

    hit = np.isfinite(best_t)
    t = np.where(hit, best_t, np.nan)
    points = origin + dirs * t[..., None]
    normals = np.where(hit[..., None], best_n, np.nan)
    label_img = np.where(hit, best_label, ev.UNLABELED).astype(np.int16)

    if sensor.kind == "lidar":
        ranges = t.copy()
    elif sensor.kind == "stereo":
        z_cam = points[..., 0] - origin[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ranges = sensor.focal_px * sensor.baseline_m / z_cam
        ranges = np.where(hit & (z_cam > 1e-9), ranges, np.nan)
    else:
        raise ValueError(f"cannot render for sensor kind {sensor.kind!r}")

    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        ranges = ranges + rng.normal(0.0, noise_sigma, size=ranges.shape)
        ranges = np.where(hit, np.maximum(ranges, 1e-6), np.nan)

    reading = SensorReading(sensor=sensor, range_image=ranges,
                            semantic=label_img, confidence=None)
    return RenderResult(reading=reading, points=points, normals=normals, hit_mask=hit)


def sample_points(scene: Scene, sensor, noise_sigma: float = 0.0, seed: int = 0):
    """Rendered scene as a labeled point set (one point per hit pixel)."""
    from .pointset import LabeledPointSet

    res = render(scene, sensor, noise_sigma=noise_sigma, seed=seed)
    # Rebuild points from the (possibly noisy) range channel for consistency.
    pts = sensor.back_project(res.reading.range_image)
    mask = np.all(np.isfinite(pts), axis=-1)
    labels = res.reading.semantic[mask].astype(np.int16)
    return LabeledPointSet(points=pts[mask], labels=labels,
                           sensor_origin=sensor.origin_array.copy())


def true_grid(scene: Scene, spec: GridSpec, corridors) -> np.ndarray:
    """Exact per-cell driving-corridor state: occupied, free or void.

    A cell is occupied when a steep (vertical) obstacle face intersects the
    corridor above the cell, void when obstacle volume intrudes into the
    corridor without a steep face over the cell (e.g. under a flat roof),
    and free otherwise.  Obstacles entirely above ``d_z_max`` leave a cell
    free.
    """
    nx, ny = spec.shape
    out = np.full((nx, ny), FREE_CELL, dtype=np.int8)
    xc = spec.centers(0)[:, None]
    yc = spec.centers(1)[None, :]
    g = np.asarray(scene.ground.height(np.broadcast_to(xc, (nx, ny)),
                                       np.broadcast_to(yc, (nx, ny))))
    top = g + corridors.d_z_max
    x_edges = spec.edges(0)
    y_edges = spec.edges(1)

    def cells_in_interval(edges, lo, hi, n):
        i0 = max(0, int(math.floor((lo - edges[0]) / (edges[1] - edges[0]))))
        i1 = min(n - 1, int(math.floor((hi - edges[0]) / (edges[1] - edges[0]))))
        return i0, i1

    for box in scene.boxes:
        lo, hi = box.lo, box.hi
        ix0, ix1 = cells_in_interval(x_edges, lo[0], hi[0], nx)
        iy0, iy1 = cells_in_interval(y_edges, lo[1], hi[1], ny)
        if ix1 < ix0 or iy1 < iy0:
            continue
        sub = np.s_[ix0:ix1 + 1, iy0:iy1 + 1]
        in_corridor = (lo[2] < top[sub]) & (hi[2] > g[sub])
        out[sub] = np.where(in_corridor & (out[sub] == FREE_CELL),
                            VOID_CELL, out[sub])
        # Vertical faces: cells whose footprint meets a face line.
        for x_face in (lo[0], hi[0]):
            ix = int(math.floor((x_face - x_edges[0]) / spec.delta[0]))
            if 0 <= ix < nx:
                face = np.s_[ix, iy0:iy1 + 1]
                occ = (lo[2] < top[face]) & (hi[2] > g[face])
                out[face] = np.where(occ, OCCUPIED_CELL, out[face])
        for y_face in (lo[1], hi[1]):
            iy = int(math.floor((y_face - y_edges[0]) / spec.delta[1]))
            if 0 <= iy < ny:
                face = np.s_[ix0:ix1 + 1, iy]
                occ = (lo[2] < top[face]) & (hi[2] > g[face])
                out[face] = np.where(occ, OCCUPIED_CELL, out[face])

    for wall in scene.walls:
        z_lo, z_hi = scene.wall_z_span(wall)
        for ix, iy in _cells_on_segment(spec, wall.p1, wall.p2):
            if z_lo < top[ix, iy] and z_hi > g[ix, iy]:
                out[ix, iy] = OCCUPIED_CELL
    return out


def _cells_on_segment(spec: GridSpec, p1, p2):
    """Grid cells crossed by a planar segment (conservative traversal)."""
    length = math.hypot(p2[0] - p1[0], p2[1] - p1[1])
    step = 0.25 * min(spec.delta)
    n = max(2, int(math.ceil(length / step)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    xs = p1[0] + ts * (p2[0] - p1[0])
    ys = p1[1] + ts * (p2[1] - p1[1])
    i, j, inside = spec.cell_index_arrays(xs, ys)
    seen = set()
    for ii, jj, ok in zip(i, j, inside):
        if ok:
            seen.add((int(ii), int(jj)))
    return sorted(seen)


def parse_scene(text: str) -> Scene:
    """Parse the line-oriented scene description format.

    Lines: ``ground a b c``, ``box cx cy cz sx sy sz label`` and
    ``wall x1 y1 x2 y2 h label``; ``#`` starts a comment.
    """
    ground = GroundPlane()
    boxes = []
    walls = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, args = parts[0], parts[1:]
        try:
            if kind == "ground":
                if len(args) != 3:
                    raise ValueError("ground takes: a b c")
                ground = GroundPlane(*(float(v) for v in args))
            elif kind == "box":
                if len(args) != 7:
                    raise ValueError("box takes: cx cy cz sx sy sz label")
                nums = [float(v) for v in args[:6]]
                ev.semantic_code(args[6])
                boxes.append(Box(center=tuple(nums[:3]), size=tuple(nums[3:]),
                                 label=args[6]))
            elif kind == "wall":
                if len(args) != 6:
                    raise ValueError("wall takes: x1 y1 x2 y2 h label")
                nums = [float(v) for v in args[:5]]
                ev.semantic_code(args[5])
                walls.append(Wall(p1=(nums[0], nums[1]), p2=(nums[2], nums[3]),
                                  height=nums[4], label=args[5]))
            else:
                raise ValueError(f"unknown primitive {kind!r}")
        except ValueError as exc:
            raise ValueError(f"scene line {lineno}: {exc}") from None
    return Scene(ground=ground, boxes=tuple(boxes), walls=tuple(walls))


def load_scene(path) -> Scene:
    with open(path, "r", encoding="ascii") as fh:
        return parse_scene(fh.read())
