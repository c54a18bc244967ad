"""Command-line verbs, argument errors, and exit codes."""

import csv
import struct

import numpy as np
import pytest
from PIL import Image

from evigrid.cli import main
from evigrid.io_formats import load_grid_map

SMALL_CONF = """
sensor.rows = 16
sensor.cols = 180
sensor.origin_z = 1.7
cartesian.x_origin = -20
cartesian.x_count = 80
cartesian.y_origin = -20
cartesian.y_count = 80
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "small.conf"
    path.write_text(SMALL_CONF)
    return str(path)


@pytest.fixture
def scene(tmp_path):
    path = tmp_path / "scene.txt"
    path.write_text("ground 0 0 0\nbox 8 0 0.75 2 2 1.5 car\n")
    return str(path)


def write_ring_cloud(path, n=4000, seed=6):
    rng = np.random.default_rng(seed)
    az = rng.uniform(0, 2 * np.pi, n)
    r = rng.uniform(3, 15, n)
    with open(path, "wb") as fh:
        for a, rr in zip(az, r):
            fh.write(struct.pack("<4f", rr * np.cos(a), rr * np.sin(a), 0.0, 0.3))


class TestErrors:
    def test_missing_input_file_names_it(self, tmp_path):
        with pytest.raises(SystemExit, match="no_such.bin"):
            main(["map-lidar", "no_such.bin", "--output",
                  str(tmp_path / "out.evgm")])

    def test_bad_config_exits_two(self, tmp_path, capsys, scene):
        bad = tmp_path / "bad.conf"
        bad.write_text("sensor.kind = radar\n")
        code = main(["synth", "--scene", scene, "--config", str(bad),
                     "--output", str(tmp_path / "out.evgm")])
        assert code == 2
        assert "sensor.kind" in capsys.readouterr().err

    def test_bad_scene_exits_two(self, tmp_path, capsys, conf):
        bad = tmp_path / "bad_scene.txt"
        bad.write_text("pyramid 1 2 3\n")
        code = main(["synth", "--scene", str(bad), "--config", conf,
                     "--output", str(tmp_path / "out.evgm")])
        assert code == 2
        assert "line 1" in capsys.readouterr().err


class TestSynthAndRender:
    def test_synth_writes_map_and_image(self, tmp_path, conf, scene):
        out = tmp_path / "map.evgm"
        png = tmp_path / "map.png"
        code = main(["synth", "--scene", scene, "--config", conf,
                     "--output", str(out), "--render", str(png),
                     "--render-mode", "occupancy"])
        assert code == 0
        grid = load_grid_map(out)
        assert grid.layers["free"].max() > 0.5
        with Image.open(png) as img:
            assert img.size == (80, 80)

    def test_render_verb_reads_map_back(self, tmp_path, conf, scene):
        out = tmp_path / "map.evgm"
        main(["synth", "--scene", scene, "--config", conf, "--output", str(out)])
        png = tmp_path / "view.png"
        code = main(["render", str(out), "--output", str(png),
                     "--mode", "semantic"])
        assert code == 0
        with Image.open(png) as img:
            assert img.mode == "RGB"


class TestMapVerbs:
    def test_map_lidar_from_cloud(self, tmp_path, conf):
        cloud = tmp_path / "scan.bin"
        write_ring_cloud(cloud)
        out = tmp_path / "map.evgm"
        code = main(["map-lidar", str(cloud), "--config", conf,
                     "--output", str(out)])
        assert code == 0
        assert load_grid_map(out).layers["free"].max() > 0.0

    def test_map_points_from_cloud(self, tmp_path, conf):
        cloud = tmp_path / "scan.bin"
        write_ring_cloud(cloud)
        out = tmp_path / "map.evgm"
        code = main(["map-points", str(cloud), "--config", conf,
                     "--output", str(out)])
        assert code == 0
        assert load_grid_map(out).layers["ground"].max() > 0.0

    def test_map_stereo_from_disparity(self, tmp_path):
        conf = tmp_path / "stereo.conf"
        conf.write_text(
            "sensor.kind = stereo\nsensor.rows = 40\nsensor.cols = 60\n"
            "sensor.focal_px = 50\nsensor.center_u = 30\nsensor.center_v = 20\n"
            "sensor.baseline_m = 0.5\nsensor.origin_z = 1.7\n"
            "measurement.u_delta = 1\nmeasurement.u_count = 60\n"
            "measurement.r_delta = 0.25\nmeasurement.r_count = 40\n"
            "cartesian.x_origin = -20\ncartesian.x_count = 80\n"
            "cartesian.y_origin = -20\ncartesian.y_count = 80\n")
        from evigrid.config import load_config, make_sensor
        from evigrid.synth import Scene, render

        res = render(Scene(), make_sensor(load_config(conf)))
        disp = res.reading.range_image
        raw = np.where(np.isfinite(disp), np.round(disp * 256.0), 0.0)
        png = tmp_path / "disp.png"
        Image.fromarray(raw.astype(np.uint16)).save(png)

        out = tmp_path / "map.evgm"
        code = main(["map-stereo", str(png), "--config", str(conf),
                     "--output", str(out)])
        assert code == 0
        grid = load_grid_map(out)
        assert grid.layers["free"].max() > 0.0
        assert grid.layers["ground"].max() > 0.0


class TestEval:
    def test_eval_writes_rate_rows(self, tmp_path, conf, scene):
        out = tmp_path / "rates.csv"
        code = main(["eval", "--scene", scene, "--config", conf,
                     "--output", str(out), "--frames", "2"])
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame_index", "method", "xi_tp", "xi_fp",
                           "xi_fn", "xi_tn"]
        assert len(rows) == 1 + 2 * 3
        assert {r[1] for r in rows[1:]} == {"flat", "normals", "fitted"}
