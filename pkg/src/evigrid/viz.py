"""Rendering of layered grid maps to images.

Two modes:

* ``occupancy``: betting probability of "some object here" as grayscale,
  white = 0 and black = 1.
* ``semantic``: each cell shows the winning hypothesis color.  The object
  side wins when any object-layer mass exceeds the largest ground-class
  mass; otherwise the best ground class wins.  Saturation encodes the
  winning mass, so weak evidence fades to white.  For ground-side (and
  empty) cells the brightness drops with missing free-space mass, which
  renders unexplored areas mid-gray and confirmed-free areas bright.

Palette (HSV hue, degrees): car 220, two_wheeler 30, pedestrian 0,
other_mobile 285, immobile 55, object union 330, street 200, sidewalk 120,
other_ground 75, ground union 160.
"""

from __future__ import annotations

import numpy as np

from . import evidential as ev
from .evidential import OCCUPANCY, pignistic_layers
from .grids import LayeredGrid

PALETTE_HUES = {
    ev.CAR: 220.0,
    ev.TWO_WHEELER: 30.0,
    ev.PEDESTRIAN: 0.0,
    ev.OTHER_MOBILE: 285.0,
    ev.IMMOBILE: 55.0,
    "object": 330.0,
    ev.STREET: 200.0,
    ev.SIDEWALK: 120.0,
    ev.OTHER_GROUND: 75.0,
    "ground": 160.0,
}

_OBJECT_LAYERS = (ev.CAR, ev.TWO_WHEELER, ev.PEDESTRIAN, ev.OTHER_MOBILE,
                  ev.IMMOBILE, "object")
_GROUND_LAYERS = (ev.STREET, ev.SIDEWALK, ev.OTHER_GROUND, "ground")

# How far a fully unexplored cell darkens in semantic mode.
_DIM = 0.5


def hsv_to_rgb(h_deg, s, v):
    """Vectorized HSV (hue in degrees) to RGB in [0, 1]."""
    h = (np.asarray(h_deg, dtype=np.float64) % 360.0) / 60.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h).astype(np.int64) % 6
    f = h - np.floor(h)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _layer_stack(grid: LayeredGrid, names) -> np.ndarray:
    spec = grid.spec
    out = np.zeros((len(names),) + spec.shape)
    for k, name in enumerate(names):
        if name in grid.layers:
            out[k] = grid.layers[name]
    return out


def occupancy_image(grid: LayeredGrid) -> np.ndarray:
    """Grayscale (nx, ny) array: 255 free, 0 occupied, in-between = belief."""
    layers = {name: grid.layers.get(name, np.zeros(grid.spec.shape))
              for name in OCCUPANCY.layer_names}
    pr = pignistic_layers(OCCUPANCY, layers, frozenset(ev.OBJECT_CLASSES))
    return np.round(255.0 * (1.0 - np.clip(pr, 0.0, 1.0))).astype(np.uint8)


def semantic_image(grid: LayeredGrid) -> np.ndarray:
    """(nx, ny, 3) uint8 per the winning-hypothesis color rule."""
    obj = _layer_stack(grid, _OBJECT_LAYERS)
    gnd = _layer_stack(grid, _GROUND_LAYERS)
    free = grid.layers.get("free", np.zeros(grid.spec.shape))

    obj_idx = np.argmax(obj, axis=0)
    obj_mass = np.take_along_axis(obj, obj_idx[None], axis=0)[0]
    gnd_idx = np.argmax(gnd, axis=0)
    gnd_mass = np.take_along_axis(gnd, gnd_idx[None], axis=0)[0]

    object_wins = obj_mass > gnd_mass
    obj_hues = np.array([PALETTE_HUES[n] for n in _OBJECT_LAYERS])
    gnd_hues = np.array([PALETTE_HUES[n] for n in _GROUND_LAYERS])
    hue = np.where(object_wins, obj_hues[obj_idx], gnd_hues[gnd_idx])
    sat = np.clip(np.where(object_wins, obj_mass, gnd_mass), 0.0, 1.0)
    val = np.where(object_wins, 1.0,
                   1.0 - _DIM * (1.0 - np.clip(free, 0.0, 1.0)))

    rgb = hsv_to_rgb(hue, sat, val)
    return np.round(255.0 * rgb).astype(np.uint8)


def render_visualization(grid: LayeredGrid, mode: str = "semantic") -> np.ndarray:
    """Render a map to an (H, W[, 3]) uint8 image, x right and y up."""
    if mode == "occupancy":
        cells = occupancy_image(grid)
    elif mode == "semantic":
        cells = semantic_image(grid)
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    # Cell arrays are indexed (x, y); flip into image convention.
    return np.flip(np.swapaxes(cells, 0, 1), axis=0).copy()


def save_visualization(path, grid: LayeredGrid, mode: str = "semantic") -> None:
    from PIL import Image

    img = render_visualization(grid, mode)
    Image.fromarray(img, mode="L" if img.ndim == 2 else "RGB").save(path)
