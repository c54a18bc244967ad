"""Soft confusion metrics and occupancy-strategy comparison."""

import csv
import math

import numpy as np
import pytest

from evigrid import evidential as ev
from evigrid.config import PipelineConfig
from evigrid.evaluation import (
    CSV_HEADER,
    ConfusionRates,
    compare_methods,
    confusion_rates,
    ground_exclusion_mask,
    occupancy_evidence,
    reference_bbas,
    write_rates_csv,
)
from evigrid.grids import GridSpec
from evigrid.measurement import Corridors, GaussianIsm
from evigrid.pointset import LabeledPointSet
from evigrid.synth import Box, Scene


def spec():
    return GridSpec(origin=(-10.0, -10.0), delta=(0.5, 0.5), shape=(60, 40))


def make_pointset(points, labels):
    return LabeledPointSet(points=np.asarray(points, float),
                           labels=np.asarray(labels),
                           sensor_origin=(0.0, 0.0, 1.7))


class TestOccupancyEvidence:
    def test_zero_probability_means_zero_mass(self):
        out = occupancy_evidence(np.array([[5.0, 0.0]]), np.zeros(2),
                                 np.array([0.0]), spec(), GaussianIsm(0.1))
        assert np.all(out == 0.0)

    def test_single_point_peak_mass(self):
        s = spec()
        out = occupancy_evidence(np.array([[5.25, 0.0]]), np.zeros(2),
                                 np.array([1.0]), s, GaussianIsm(0.1), p_fp=0.0)
        i, j = s.cell_of((5.25, 0.0))
        assert out[i, j] == pytest.approx(math.erf(0.25 / (math.sqrt(2.0) * 0.1)),
                                          abs=1e-9)


class TestReferenceBbas:
    def test_ground_only_scene_has_empty_reference(self):
        pts = [[4.25, 0.25, 0.0], [6.25, 1.25, 0.0], [8.25, -1.25, 0.0]]
        ps = make_pointset(pts, [ev.semantic_code("street")] * 3)
        m_ref, m_all = reference_bbas(ps, spec(), GaussianIsm(0.1), Corridors())
        assert np.all(m_ref == 0.0)
        assert m_all.max() > 0.5

    def test_object_only_scene_matches_normalizer(self):
        pts = [[4.25, 0.25, 1.0], [6.25, 1.25, 1.0]]
        ps = make_pointset(pts, [ev.semantic_code("car")] * 2)
        m_ref, m_all = reference_bbas(ps, spec(), GaussianIsm(0.1), Corridors())
        np.testing.assert_array_equal(m_ref, m_all)
        assert m_all.max() > 0.5

    def test_mixed_scene_reference_bounded_by_normalizer(self):
        rng = np.random.default_rng(2)
        pts = np.column_stack([rng.uniform(1, 9, 200), rng.uniform(-5, 5, 200),
                               rng.uniform(0, 2, 200)])
        labels = np.where(rng.random(200) < 0.5, ev.semantic_code("car"),
                          ev.semantic_code("street"))
        ps = make_pointset(pts, labels)
        m_ref, m_all = reference_bbas(ps, spec(), GaussianIsm(0.1), Corridors())
        assert np.all(m_ref <= m_all + 1e-9)

    def test_unlabeled_points_are_ignored(self):
        ps = make_pointset([[5.0, 0.0, 1.0]], [ev.UNLABELED])
        m_ref, m_all = reference_bbas(ps, spec(), GaussianIsm(0.1), Corridors())
        assert np.all(m_all == 0.0)

    def test_points_above_corridor_are_ignored(self):
        ps = make_pointset([[5.0, 0.0, 3.0]], [ev.semantic_code("car")])
        m_ref, m_all = reference_bbas(ps, spec(), GaussianIsm(0.1), Corridors())
        assert np.all(m_all == 0.0)


class TestGroundExclusion:
    def test_other_ground_majority_is_excluded(self):
        s = spec()
        pts = [[5.25, 0.25, 0.0]] * 3 + [[5.25, 0.25, 0.0]]
        labels = [ev.semantic_code("other_ground")] * 3 + [ev.semantic_code("street")]
        mask = ground_exclusion_mask(make_pointset(pts, labels), s)
        i, j = s.cell_of((5.25, 0.25))
        assert mask[i, j]
        assert mask.sum() == 1

    def test_tie_is_not_excluded(self):
        s = spec()
        pts = [[5.25, 0.25, 0.0]] * 2
        labels = [ev.semantic_code("other_ground"), ev.semantic_code("street")]
        mask = ground_exclusion_mask(make_pointset(pts, labels), s)
        assert not mask.any()

    def test_empty_pointset_excludes_nothing(self):
        ps = LabeledPointSet(points=np.empty((0, 3)))
        assert not ground_exclusion_mask(ps, spec()).any()


class TestConfusionRates:
    def test_perfect_estimate_has_no_errors(self):
        m_all = np.array([[0.8, 0.5], [0.9, 0.0]])
        m_ref = np.array([[0.8, 0.0], [0.9, 0.0]])
        rates = confusion_rates(m_ref, m_ref, m_all)
        assert rates.xi_fp == 0.0
        assert rates.xi_fn == 0.0
        assert rates.xi_tp + rates.xi_tn == pytest.approx(1.0, abs=1e-12)

    def test_everything_occupied_against_empty_reference(self):
        m_all = np.array([[0.7, 0.4]])
        rates = confusion_rates(m_all, np.zeros_like(m_all), m_all)
        assert rates.xi_fp == pytest.approx(1.0, abs=1e-12)
        assert rates.xi_tp == 0.0

    def test_matches_brute_force_table(self):
        rng = np.random.default_rng(13)
        m_all = rng.uniform(0.1, 1.0, (2, 2))
        u = rng.uniform(0, 1, (2, 2))
        v = rng.uniform(0, 1, (2, 2))
        m_ref = u * m_all
        m_est = v * m_all
        rates = confusion_rates(m_est, m_ref, m_all)

        tp = fp = fn = tn = 0.0
        for i in range(2):
            for j in range(2):
                w = m_all[i, j]
                e = m_est[i, j] / w
                r = m_ref[i, j] / w
                tp += e * r * w
                fp += e * (1 - r) * w
                fn += (1 - e) * r * w
                tn += (1 - e) * (1 - r) * w
        total = tp + fp + fn + tn
        assert rates.xi_tp == pytest.approx(tp / total, abs=1e-12)
        assert rates.xi_fp == pytest.approx(fp / total, abs=1e-12)
        assert rates.xi_fn == pytest.approx(fn / total, abs=1e-12)
        assert rates.xi_tn == pytest.approx(tn / total, abs=1e-12)

    def test_rates_sum_to_one(self):
        rng = np.random.default_rng(17)
        m_all = rng.uniform(0.0, 1.0, (10, 10))
        m_ref = m_all * rng.uniform(0, 1, (10, 10))
        m_est = m_all * rng.uniform(0, 1, (10, 10))
        rates = confusion_rates(m_est, m_ref, m_all)
        assert sum(rates.as_row()) == pytest.approx(1.0, abs=1e-9)

    def test_common_scaling_cancels(self):
        rng = np.random.default_rng(19)
        m_all = rng.uniform(0.1, 1.0, (4, 4))
        m_ref = m_all * rng.uniform(0, 1, (4, 4))
        m_est = m_all * rng.uniform(0, 1, (4, 4))
        a = confusion_rates(m_est, m_ref, m_all)
        b = confusion_rates(0.5 * m_est, 0.5 * m_ref, 0.5 * m_all)
        np.testing.assert_allclose(b.as_row(), a.as_row(), atol=1e-12)

    def test_no_evidence_returns_none(self):
        z = np.zeros((3, 3))
        assert confusion_rates(z, z, z) is None

    def test_exclusion_mask_removes_cells(self):
        m_all = np.array([[1.0, 1.0]])
        m_ref = np.array([[1.0, 0.0]])
        m_est = np.array([[1.0, 1.0]])    # second cell is a false positive
        dirty = confusion_rates(m_est, m_ref, m_all)
        assert dirty.xi_fp == pytest.approx(0.5, abs=1e-12)
        exclude = np.array([[False, True]])
        clean = confusion_rates(m_est, m_ref, m_all, exclude=exclude)
        assert clean.xi_fp == 0.0
        assert clean.xi_tp == pytest.approx(1.0, abs=1e-12)


class TestCsv:
    def test_header_and_formatting(self, tmp_path):
        path = tmp_path / "rates.csv"
        rows = [(0, "flat", ConfusionRates(0.25, 0.5, 0.125, 0.125)),
                (1, "normals", ConfusionRates(1.0, 0.0, 0.0, 0.0))]
        write_rates_csv(path, rows)
        with open(path, newline="") as fh:
            read = list(csv.reader(fh))
        assert read[0] == list(CSV_HEADER)
        assert read[0] == ["frame_index", "method", "xi_tp", "xi_fp", "xi_fn", "xi_tn"]
        assert read[1] == ["0", "flat", "0.25", "0.5", "0.125", "0.125"]
        assert read[2][1] == "normals"


class TestCompareMethods:
    def test_level_scene_rows_and_sanity(self):
        cfg = PipelineConfig(sensor_rows=16, sensor_cols=180,
                             cartesian_x_origin=-20.0, cartesian_x_count=80,
                             cartesian_y_origin=-20.0, cartesian_y_count=80)
        scene = Scene(boxes=(Box(center=(8.0, 0.0, 0.75), size=(2.0, 2.0, 1.5),
                                 label="car"),))
        rows = compare_methods(scene, cfg, n_frames=2, seed=0,
                               methods=("flat", "fitted"))
        assert len(rows) == 4
        assert {m for _, m, _ in rows} == {"flat", "fitted"}
        for k, _, rates in rows:
            assert k in (0, 1)
            assert sum(rates.as_row()) == pytest.approx(1.0, abs=1e-9)
            # Level ground: a correct flat model makes few false positives.
            assert rates.xi_fp < 0.05

    def test_unknown_method_rejected(self):
        cfg = PipelineConfig(sensor_rows=8, sensor_cols=90)
        with pytest.raises(ValueError):
            compare_methods(Scene(), cfg, n_frames=1, methods=("magic",))

    def test_requires_lidar(self):
        cfg = PipelineConfig(sensor_kind="stereo")
        with pytest.raises(ValueError):
            compare_methods(Scene(), cfg, n_frames=1)
