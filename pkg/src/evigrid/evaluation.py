"""Soft confusion metrics between occupancy maps and a label-derived reference.

Reference maps replace the estimated occupancy probability with reference
labels: ``m_ref`` marks a detection occupying iff its label is an object
class, ``m_all`` marks every detection occupying and serves as the
normalizer, so cells covered by many measurements weigh more.  Per cell the
normalized masses combine into soft true/false positive/negative portions
whose grid totals give the four confusion rates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import evidential as ev
from .grids import GridSpec
from .measurement import Corridors, GaussianIsm
from .pointset import LabeledPointSet, _splat_log_gaussian


@dataclass(frozen=True)
class ConfusionRates:
    xi_tp: float
    xi_fp: float
    xi_fn: float
    xi_tn: float

    def as_row(self) -> tuple:
        return (self.xi_tp, self.xi_fp, self.xi_fn, self.xi_tn)


def occupancy_evidence(points_xy: np.ndarray, origin_xy: np.ndarray,
                       p_occ: np.ndarray, spec: GridSpec, ism: GaussianIsm,
                       p_fp: float = 0.05) -> np.ndarray:
    """Single-layer occupancy mass map from per-point occupancy switches.

    Semantic layers are collapsed: everything accumulates into one layer
    with a neutral class match, which is the common ground needed to compare
    occupancy deduction strategies.
    """
    h = np.zeros(spec.shape)
    ones = np.ones(len(points_xy))
    _splat_log_gaussian(h, spec, points_xy, origin_xy, np.asarray(p_occ, float),
                        ones, p_fp, ism.sigma)
    return -np.expm1(h)


def reference_bbas(pointset: LabeledPointSet, spec: GridSpec, ism: GaussianIsm,
                   corridors: Corridors, p_fp: float = 0.05) -> tuple:
    """Reference occupancy map and normalizer map from labeled detections.

    Unlabeled detections are excluded from both maps.  Detections above the
    driving corridor are skipped like everywhere else in the chain.
    """
    labels = pointset.labels
    labeled = labels >= 0
    object_codes = [ev.semantic_code(c) for c in ev.OBJECT_CLASSES]
    is_object = np.isin(labels, object_codes)

    # The corridor skip for the reference uses the vehicle resting plane z = 0.
    dz_keep = pointset.points[:, 2] < corridors.d_z_max
    keep = labeled & dz_keep
    pts = pointset.points[keep, :2]
    origin_xy = pointset.sensor_origin[:2]
    p_ref = is_object[keep].astype(float)
    p_all = np.ones(keep.sum())

    m_ref = occupancy_evidence(pts, origin_xy, p_ref, spec, ism, p_fp)
    m_all = occupancy_evidence(pts, origin_xy, p_all, spec, ism, p_fp)
    return m_ref, m_all


def ground_exclusion_mask(pointset: LabeledPointSet, spec: GridSpec) -> np.ndarray:
    """Cells whose majority reference ground label is 'other ground'."""
    counts = {name: np.zeros(spec.shape) for name in ev.GROUND_CLASSES}
    i, j, inside = spec.cell_index_arrays(pointset.points[:, 0], pointset.points[:, 1])
    for name in ev.GROUND_CLASSES:
        sel = inside & (pointset.labels == ev.semantic_code(name))
        np.add.at(counts[name], (i[sel], j[sel]), 1.0)
    other = counts[ev.OTHER_GROUND]
    return (other > counts[ev.STREET]) & (other > counts[ev.SIDEWALK]) & (other > 0)


def confusion_rates(m_est: np.ndarray, m_ref: np.ndarray, m_all: np.ndarray,
                    exclude: np.ndarray | None = None) -> ConfusionRates | None:
    """Soft confusion rates of an occupancy map against the reference maps.

    Cells without reference evidence (``m_all`` = 0) and excluded cells are
    ignored.  Returns None when no evaluated mass remains.
    """
    m_est = np.asarray(m_est, dtype=float)
    m_ref = np.asarray(m_ref, dtype=float)
    m_all = np.asarray(m_all, dtype=float)
    use = m_all > 0.0
    if exclude is not None:
        use &= ~np.asarray(exclude, dtype=bool)
    if not np.any(use):
        return None
    est = m_est[use] / m_all[use]
    ref = m_ref[use] / m_all[use]
    w = m_all[use]
    tp = float(np.sum(est * ref * w))
    fp = float(np.sum(est * (1.0 - ref) * w))
    fn = float(np.sum((1.0 - est) * ref * w))
    tn = float(np.sum((1.0 - est) * (1.0 - ref) * w))
    total = tp + fp + fn + tn
    if total <= 0.0:
        return None
    return ConfusionRates(xi_tp=tp / total, xi_fp=fp / total,
                          xi_fn=fn / total, xi_tn=tn / total)


CSV_HEADER = ("frame_index", "method", "xi_tp", "xi_fp", "xi_fn", "xi_tn")


def write_rates_csv(path, rows) -> None:
    """Write (frame_index, method, ConfusionRates) rows to a CSV file."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for frame_index, method, rates in rows:
            writer.writerow((frame_index, method) + tuple(
                format(v, ".10g") for v in rates.as_row()))


def compare_methods(scene, cfg, n_frames: int = 20, seed: int = 0,
                    methods=("flat", "normals", "fitted"),
                    step=(0.4, 0.15), noise_sigma: float = 0.02):
    """Per-frame confusion rates of occupancy deduction strategies on a scene.

    The sensor advances by ``step`` per frame over the scene.  All methods
    score the same detection subset (labeled pixels inside the resting-plane
    corridor) and differ only in the occupancy probability they assign:
    height above a flat plane, height above a fitted plane, or the surface
    orientation switch from the range-image chain.  Returns rows of
    (frame_index, method, ConfusionRates) ready for :func:`write_rates_csv`.
    """
    from .config import (make_cartesian_spec, make_corridors, make_image_params,
                         make_sensor)
    from .pointset import GroundModel, classify_points, fit_plane
    from .sensor_image import derive_images
    from .synth import render

    sensor = make_sensor(cfg)
    if sensor.kind != "lidar":
        raise ValueError("the method comparison uses a lidar sensor")
    spec = make_cartesian_spec(cfg)
    corridors = make_corridors(cfg)
    ism = GaussianIsm(sigma=cfg.ism_sigma_r)
    params = make_image_params(cfg)
    p_fp = cfg.relevance_p_fp

    rows = []
    for k in range(n_frames):
        frame = scene.shifted(step[0] * k, step[1] * k)
        res = render(frame, sensor, noise_sigma=noise_sigma, seed=seed + k)
        reading = res.reading

        pts3 = sensor.back_project(reading.range_image)
        finite = np.all(np.isfinite(pts3), axis=-1)
        common = finite & (reading.semantic >= 0) & (pts3[..., 2] < corridors.d_z_max)

        pointset = LabeledPointSet(points=pts3[common],
                                   labels=reading.semantic[common],
                                   sensor_origin=sensor.origin_array.copy())
        m_ref, m_all = reference_bbas(pointset, spec, ism, corridors, p_fp)
        exclude = ground_exclusion_mask(pointset, spec)
        origin_xy = sensor.origin_array[:2]

        for method in methods:
            if method == "normals":
                derived = derive_images(reading, params)
                ok = (derived.valid & np.isfinite(derived.f_occ)
                      & np.isfinite(derived.f_ground)
                      & (derived.f_ground >= 0.0)
                      & (derived.f_ground < corridors.d_z_max))
                p_img = np.where(ok, np.nan_to_num(derived.f_occ), 0.0)
                p_occ = p_img[common]
            elif method in ("flat", "fitted"):
                if method == "flat":
                    model = GroundModel.flat(delta_g=cfg.ground_delta_g)
                else:
                    model = fit_plane(pointset.points,
                                      cell_size=cfg.ground_fit_cell_m,
                                      delta_g=cfg.ground_delta_g)
                p_occ = classify_points(pointset.points, model, corridors.d_z_max)
            else:
                raise ValueError(f"unknown method {method!r}")
            m_est = occupancy_evidence(pointset.points[:, :2], origin_xy,
                                       p_occ, spec, ism, p_fp)
            rates = confusion_rates(m_est, m_ref, m_all, exclude=exclude)
            if rates is not None:
                rows.append((k, method, rates))
    return rows
