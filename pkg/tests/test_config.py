"""Key-value pipeline configuration: parsing, validation, object builders."""

import pytest

from evigrid import evidential as ev
from evigrid.config import (
    ConfigError,
    PipelineConfig,
    load_config,
    make_cartesian_spec,
    make_corridors,
    make_geometry,
    make_ground_model,
    make_image_params,
    make_isms,
    make_measurement_spec,
    make_sensor,
    parse_config,
)
from evigrid.grids import PolarGeometry, UDisparityGeometry
from evigrid.measurement import GaussianIsm, IntervalIsm
from evigrid.sensors import LidarSensor, StereoSensor

SAMPLE = """
# lidar front end
sensor.kind = lidar
sensor.rows = 32
sensor.cols = 900
sensor.origin_z = 1.6

measurement.r_delta = 0.25
measurement.r_count = 200
cartesian.x_delta = 1.0     # coarse output

relevance.p_fp = 0.1
ground.delta_g = 0.4
"""


class TestParse:
    def test_empty_text_gives_defaults(self):
        cfg = parse_config("")
        assert cfg == PipelineConfig()

    def test_sample_values_land(self):
        cfg = parse_config(SAMPLE)
        assert cfg.sensor_rows == 32
        assert cfg.sensor_cols == 900
        assert cfg.sensor_origin_z == 1.6
        assert cfg.measurement_r_delta == 0.25
        assert cfg.measurement_r_count == 200
        assert cfg.cartesian_x_delta == 1.0
        assert cfg.relevance_p_fp == 0.1
        assert cfg.ground_delta_g == 0.4

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"line 2.*sensor\.rowz"):
            parse_config("sensor.rows = 32\nsensor.rowz = 16\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("sensor.rows = thirty")

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("sensor.rows 32")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "pipeline.conf"
        path.write_text(SAMPLE)
        assert load_config(path).sensor_rows == 32


class TestClassMap:
    def test_override_adds_entry(self):
        cfg = parse_config("classmap.99 = pedestrian")
        assert cfg.class_map[99] == "pedestrian"

    def test_unlabeled_removes_entry(self):
        cfg = parse_config("classmap.40 = unlabeled")
        assert 40 not in cfg.class_map

    def test_non_integer_id_rejected(self):
        with pytest.raises(ConfigError, match="integer"):
            parse_config("classmap.foo = car")

    def test_unknown_class_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("classmap.10 = unicorn")

    def test_default_map_untouched_by_instances(self):
        a = parse_config("classmap.40 = unlabeled")
        b = parse_config("")
        assert 40 in b.class_map
        assert 40 not in a.class_map


class TestValidation:
    def test_bad_sensor_kind(self):
        with pytest.raises(ConfigError, match="sensor.kind"):
            parse_config("sensor.kind = radar")

    def test_interval_model_needs_camera(self):
        with pytest.raises(ConfigError):
            parse_config("ism.ground = interval")
        cfg = parse_config("sensor.kind = stereo\nism.ground = interval")
        assert cfg.ism_ground == "interval"

    def test_false_positive_rate_range(self):
        with pytest.raises(ConfigError, match="p_fp"):
            parse_config("relevance.p_fp = 1.0")
        with pytest.raises(ConfigError, match="p_fp"):
            parse_config("relevance.p_fp = -0.1")

    def test_inverted_corridor_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("corridors.f_z_min = 2.0\ncorridors.f_z_max = 1.0")

    def test_bad_ground_model(self):
        with pytest.raises(ConfigError, match="ground.model"):
            parse_config("ground.model = spline")


class TestBuilders:
    def test_lidar_sensor(self):
        sensor = make_sensor(PipelineConfig())
        assert isinstance(sensor, LidarSensor)
        assert sensor.rows == 64
        assert sensor.origin == (0.0, 0.0, 1.73)

    def test_stereo_sensor(self):
        sensor = make_sensor(PipelineConfig(sensor_kind="stereo"))
        assert isinstance(sensor, StereoSensor)
        assert sensor.baseline_m == 0.54

    def test_geometry_matches_sensor(self):
        assert isinstance(make_geometry(PipelineConfig()), PolarGeometry)
        geo = make_geometry(PipelineConfig(sensor_kind="stereo"))
        assert isinstance(geo, UDisparityGeometry)

    def test_grid_specs(self):
        cfg = PipelineConfig()
        m = make_measurement_spec(cfg)
        assert m.shape == (720, 100)
        assert m.delta == (0.5, 0.5)
        c = make_cartesian_spec(cfg)
        assert c.shape == (200, 200)
        assert c.origin == (-50.0, -50.0)

    def test_corridors(self):
        c = make_corridors(PipelineConfig())
        assert c.d_z_max == 2.5
        assert c.r_max == 50.0

    def test_image_params_wire_through(self):
        p = make_image_params(PipelineConfig(ism_sigma_r=0.06, filter_radius=3))
        assert p.sigma_range == 0.06
        assert p.filter_radius == 3

    def test_isms_for_lidar(self):
        isms = make_isms(PipelineConfig())
        assert isinstance(isms.occupancy, GaussianIsm)
        assert isms.occupancy.sigma == 0.03
        assert isinstance(isms.ground, GaussianIsm)

    def test_isms_for_stereo_interval(self):
        cfg = PipelineConfig(sensor_kind="stereo", ism_ground="interval",
                             measurement_r_delta=0.4)
        isms = make_isms(cfg)
        assert isms.occupancy.sigma == 0.5  # disparity units
        assert isinstance(isms.ground, IntervalIsm)
        assert isms.ground.delta_r == 0.4

    def test_ground_model_flat(self):
        model = make_ground_model(PipelineConfig(ground_delta_g=0.25))
        assert model.coeffs == (0.0, 0.0, 0.0)
        assert model.delta_g == 0.25

    def test_ground_model_fitted_needs_points(self):
        cfg = PipelineConfig(ground_model="fitted")
        with pytest.raises(ConfigError):
            make_ground_model(cfg)
        import numpy as np
        pts = np.column_stack([np.arange(9.0) % 3 * 3, np.arange(9.0) // 3 * 3,
                               np.zeros(9)])
        model = make_ground_model(cfg, points=pts)
        assert abs(model.coeffs[0]) < 1e-9


def test_semantic_codes_cover_all_classes():
    for name in ev.OBJECT_CLASSES + ev.GROUND_CLASSES:
        assert ev.semantic_code(name) >= 0
