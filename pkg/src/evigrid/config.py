"""Line-oriented ``key = value`` pipeline configuration.

Keys use dotted section prefixes (``sensor.rows = 64``); ``#`` starts a
comment.  Unknown keys are rejected so typos cannot silently fall back to
defaults.  ``classmap.<id> = <class>`` entries translate integer label codes
from input files into the semantic vocabulary (or ``unlabeled``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from . import evidential as ev
from .grids import (
    GridSpec,
    PlanarPose,
    PolarGeometry,
    UDisparityGeometry,
    UDistanceGeometry,
)
from .measurement import Corridors, GaussianIsm, IntervalIsm, IsmConfig
from .pointset import GroundModel
from .sensor_image import ImageParams
from .sensors import LidarSensor, StereoSensor


class ConfigError(ValueError):
    pass


# Default translation of common automotive label ids (SemanticKITTI-style)
# into the package vocabulary.  Override with classmap.<id> entries.
DEFAULT_CLASS_MAP = {
    10: ev.CAR, 13: ev.OTHER_MOBILE, 18: ev.OTHER_MOBILE, 20: ev.OTHER_MOBILE,
    11: ev.TWO_WHEELER, 15: ev.TWO_WHEELER, 31: ev.TWO_WHEELER, 32: ev.TWO_WHEELER,
    30: ev.PEDESTRIAN,
    40: ev.STREET, 44: ev.STREET, 60: ev.STREET,
    48: ev.SIDEWALK,
    49: ev.OTHER_GROUND, 72: ev.OTHER_GROUND,
    50: ev.IMMOBILE, 51: ev.IMMOBILE, 52: ev.IMMOBILE, 70: ev.IMMOBILE,
    71: ev.IMMOBILE, 80: ev.IMMOBILE, 81: ev.IMMOBILE, 99: ev.IMMOBILE,
}


@dataclass
class PipelineConfig:
    """Every tunable of the mapping chain, with working defaults."""

    # sensor.*
    sensor_kind: str = "lidar"            # lidar | stereo
    sensor_rows: int = 64
    sensor_cols: int = 2000
    sensor_fov_up_deg: float = 2.0
    sensor_fov_down_deg: float = -24.8
    sensor_focal_px: float = 700.0
    sensor_center_u: float = 600.0
    sensor_center_v: float = 180.0
    sensor_baseline_m: float = 0.54
    sensor_origin_x: float = 0.0
    sensor_origin_y: float = 0.0
    sensor_origin_z: float = 1.73
    sensor_yaw_deg: float = 0.0

    # measurement.* (sensor-aligned grid: u axis, r axis)
    measurement_u_origin: float = 0.0
    measurement_u_delta: float = 0.5
    measurement_u_count: int = 720
    measurement_r_origin: float = 0.0
    measurement_r_delta: float = 0.5
    measurement_r_count: int = 100

    # cartesian.*
    cartesian_x_origin: float = -50.0
    cartesian_x_delta: float = 0.5
    cartesian_x_count: int = 200
    cartesian_y_origin: float = -50.0
    cartesian_y_delta: float = 0.5
    cartesian_y_count: int = 200

    # corridors.*
    corridors_d_z_max: float = 2.5
    corridors_f_z_min: float = 0.3
    corridors_f_z_max: float = 1.8
    corridors_r_max: float = 50.0

    # relevance.*
    relevance_p_fp: float = 0.05

    # ism.*
    ism_sigma_r: float = 0.03             # Gaussian sigma, grid range units
    ism_ground: str = "gaussian"          # gaussian | interval
    ism_sigma_disparity: float = 0.5      # Gaussian sigma for disparity grids [px]

    # filter.*
    filter_sigma_value_height: float = 0.1
    filter_sigma_value_dist: float = 0.1
    filter_sigma_spatial: float = 1.5
    filter_radius: int = 2

    # normals.*
    normals_slope_occupancy: float = 10.0
    normals_slope_confidence: float = 50.0
    normals_max_neighbor_offset: int = 3

    # ground.*
    ground_bottom_row_threshold: float = 0.5
    ground_delta_g: float = 0.3
    ground_model: str = "flat"            # flat | fitted
    ground_fit_cell_m: float = 2.0

    # warp.*
    warp_supersample: int = 4

    # classmap.* overrides
    class_map: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_MAP))


_KEY_MAP = {
    "sensor.kind": ("sensor_kind", str),
    "sensor.rows": ("sensor_rows", int),
    "sensor.cols": ("sensor_cols", int),
    "sensor.fov_up_deg": ("sensor_fov_up_deg", float),
    "sensor.fov_down_deg": ("sensor_fov_down_deg", float),
    "sensor.focal_px": ("sensor_focal_px", float),
    "sensor.center_u": ("sensor_center_u", float),
    "sensor.center_v": ("sensor_center_v", float),
    "sensor.baseline_m": ("sensor_baseline_m", float),
    "sensor.origin_x": ("sensor_origin_x", float),
    "sensor.origin_y": ("sensor_origin_y", float),
    "sensor.origin_z": ("sensor_origin_z", float),
    "sensor.yaw_deg": ("sensor_yaw_deg", float),
    "measurement.u_origin": ("measurement_u_origin", float),
    "measurement.u_delta": ("measurement_u_delta", float),
    "measurement.u_count": ("measurement_u_count", int),
    "measurement.r_origin": ("measurement_r_origin", float),
    "measurement.r_delta": ("measurement_r_delta", float),
    "measurement.r_count": ("measurement_r_count", int),
    "cartesian.x_origin": ("cartesian_x_origin", float),
    "cartesian.x_delta": ("cartesian_x_delta", float),
    "cartesian.x_count": ("cartesian_x_count", int),
    "cartesian.y_origin": ("cartesian_y_origin", float),
    "cartesian.y_delta": ("cartesian_y_delta", float),
    "cartesian.y_count": ("cartesian_y_count", int),
    "corridors.d_z_max": ("corridors_d_z_max", float),
    "corridors.f_z_min": ("corridors_f_z_min", float),
    "corridors.f_z_max": ("corridors_f_z_max", float),
    "corridors.r_max": ("corridors_r_max", float),
    "relevance.p_fp": ("relevance_p_fp", float),
    "ism.sigma_r": ("ism_sigma_r", float),
    "ism.ground": ("ism_ground", str),
    "ism.sigma_disparity": ("ism_sigma_disparity", float),
    "filter.sigma_value_height": ("filter_sigma_value_height", float),
    "filter.sigma_value_dist": ("filter_sigma_value_dist", float),
    "filter.sigma_spatial": ("filter_sigma_spatial", float),
    "filter.radius": ("filter_radius", int),
    "normals.slope_occupancy": ("normals_slope_occupancy", float),
    "normals.slope_confidence": ("normals_slope_confidence", float),
    "normals.max_neighbor_offset": ("normals_max_neighbor_offset", int),
    "ground.bottom_row_threshold": ("ground_bottom_row_threshold", float),
    "ground.delta_g": ("ground_delta_g", float),
    "ground.model": ("ground_model", str),
    "ground.fit_cell_m": ("ground_fit_cell_m", float),
    "warp.supersample": ("warp_supersample", int),
}


def parse_config(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("classmap."):
            try:
                code = int(key.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"line {lineno}: classmap key needs an integer id") from None
            if value == "unlabeled":
                cfg.class_map.pop(code, None)
            else:
                try:
                    ev.semantic_code(value)
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: {exc}") from None
                cfg.class_map[code] = value
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, cast = _KEY_MAP[key]
        try:
            setattr(cfg, attr, cast(value))
        except ValueError:
            raise ConfigError(
                f"line {lineno}: cannot parse {value!r} as {cast.__name__}") from None
    _validate(cfg)
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())


def _validate(cfg: PipelineConfig) -> None:
    if cfg.sensor_kind not in ("lidar", "stereo"):
        raise ConfigError(f"sensor.kind must be lidar or stereo, got {cfg.sensor_kind!r}")
    if cfg.ism_ground not in ("gaussian", "interval"):
        raise ConfigError("ism.ground must be gaussian or interval")
    if cfg.ism_ground == "interval" and cfg.sensor_kind == "lidar":
        raise ConfigError("the interval model is only valid for camera sensors")
    if cfg.ground_model not in ("flat", "fitted"):
        raise ConfigError("ground.model must be flat or fitted")
    try:
        make_corridors(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not 0.0 <= cfg.relevance_p_fp < 1.0:
        raise ConfigError("relevance.p_fp must lie in [0, 1)")


def make_sensor(cfg: PipelineConfig):
    origin = (cfg.sensor_origin_x, cfg.sensor_origin_y, cfg.sensor_origin_z)
    if cfg.sensor_kind == "lidar":
        return LidarSensor(rows=cfg.sensor_rows, cols=cfg.sensor_cols,
                           fov_up_deg=cfg.sensor_fov_up_deg,
                           fov_down_deg=cfg.sensor_fov_down_deg, origin=origin)
    return StereoSensor(rows=cfg.sensor_rows, cols=cfg.sensor_cols,
                        focal_px=cfg.sensor_focal_px, center_u=cfg.sensor_center_u,
                        center_v=cfg.sensor_center_v, baseline_m=cfg.sensor_baseline_m,
                        origin=origin)


def make_geometry(cfg: PipelineConfig):
    pose = PlanarPose(cfg.sensor_origin_x, cfg.sensor_origin_y, cfg.sensor_yaw_deg)
    if cfg.sensor_kind == "lidar":
        return PolarGeometry(pose=pose)
    return UDisparityGeometry(focal_px=cfg.sensor_focal_px, center_u=cfg.sensor_center_u,
                              baseline_m=cfg.sensor_baseline_m, pose=pose)


def make_measurement_spec(cfg: PipelineConfig) -> GridSpec:
    return GridSpec(origin=(cfg.measurement_u_origin, cfg.measurement_r_origin),
                    delta=(cfg.measurement_u_delta, cfg.measurement_r_delta),
                    shape=(cfg.measurement_u_count, cfg.measurement_r_count))


def make_cartesian_spec(cfg: PipelineConfig) -> GridSpec:
    return GridSpec(origin=(cfg.cartesian_x_origin, cfg.cartesian_y_origin),
                    delta=(cfg.cartesian_x_delta, cfg.cartesian_y_delta),
                    shape=(cfg.cartesian_x_count, cfg.cartesian_y_count))


def make_corridors(cfg: PipelineConfig) -> Corridors:
    return Corridors(d_z_max=cfg.corridors_d_z_max, f_z_min=cfg.corridors_f_z_min,
                     f_z_max=cfg.corridors_f_z_max, r_max=cfg.corridors_r_max)


def make_image_params(cfg: PipelineConfig) -> ImageParams:
    return ImageParams(
        sigma_value_height=cfg.filter_sigma_value_height,
        sigma_value_dist=cfg.filter_sigma_value_dist,
        sigma_spatial=cfg.filter_sigma_spatial,
        filter_radius=cfg.filter_radius,
        max_neighbor_offset=cfg.normals_max_neighbor_offset,
        slope_occupancy=cfg.normals_slope_occupancy,
        slope_confidence=cfg.normals_slope_confidence,
        sigma_range=cfg.ism_sigma_r,
        bottom_row_threshold=cfg.ground_bottom_row_threshold,
    )


def make_isms(cfg: PipelineConfig) -> IsmConfig:
    sigma = cfg.ism_sigma_disparity if cfg.sensor_kind == "stereo" else cfg.ism_sigma_r
    occupancy = GaussianIsm(sigma=sigma)
    if cfg.ism_ground == "interval":
        ground = IntervalIsm(delta_r=cfg.measurement_r_delta)
    else:
        ground = GaussianIsm(sigma=sigma)
    return IsmConfig(occupancy=occupancy, ground=ground)


def make_ground_model(cfg: PipelineConfig, points=None) -> GroundModel:
    if cfg.ground_model == "fitted":
        from .pointset import fit_plane

        if points is None:
            raise ConfigError("fitted ground model needs points")
        return fit_plane(points, cell_size=cfg.ground_fit_cell_m,
                         delta_g=cfg.ground_delta_g)
    return GroundModel.flat(delta_g=cfg.ground_delta_g)
