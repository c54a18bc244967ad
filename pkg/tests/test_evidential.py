"""Belief-mass core: relevance combination, log accumulators, pignistic."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evigrid.evidential import (
    BBA,
    GROUND,
    MASS_EPS,
    OCCUPANCY,
    Frame,
    bba_from_log_accumulator,
    not_relevant,
    pignistic,
    pignistic_layers,
    semantic_code,
    validate,
)

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestNotRelevant:
    def test_fully_relevant_measurement_gives_zero(self):
        assert not_relevant(0.0, 1.0, 1.0, 1.0) == 0.0

    def test_certain_false_positive_gives_one(self):
        for args in [(1.0, 0.3, 0.9, 0.2), (1.0, 0.0, 0.0, 0.0), (1.0, 1.0, 1.0, 1.0)]:
            assert not_relevant(*args) == pytest.approx(1.0, abs=1e-15)

    def test_mixed_inputs_match_term_by_term_sum(self):
        # Oracle: the four disjoint failure branches, summed by hand.
        p_fp, p_occ, p_w, p_ism = 0.1, 0.8, 0.9, 0.5
        expected = (p_fp
                    + (1 - p_fp) * (1 - p_occ)
                    + (1 - p_fp) * p_occ * (1 - p_w)
                    + (1 - p_fp) * p_occ * p_w * (1 - p_ism))
        assert expected == pytest.approx(0.676, abs=1e-12)
        assert not_relevant(p_fp, p_occ, p_w, p_ism) == pytest.approx(expected, abs=1e-15)
        # Same value through the collapsed product form.
        assert not_relevant(p_fp, p_occ, p_w, p_ism) == pytest.approx(
            1.0 - 0.9 * 0.8 * 0.9 * 0.5, abs=1e-12)

    @pytest.mark.parametrize("bad", [(-0.1, 0.5, 0.5, 0.5), (0.5, 1.2, 0.5, 0.5),
                                     (0.5, 0.5, float("nan"), 0.5), (0.5, 0.5, 0.5, 2.0)])
    def test_rejects_inputs_outside_unit_interval(self, bad):
        with pytest.raises(ValueError):
            not_relevant(*bad)

    def test_accepts_arrays(self):
        out = not_relevant(0.0, np.array([1.0, 0.5]), 1.0, np.array([1.0, 1.0]))
        np.testing.assert_allclose(out, [0.0, 0.5], atol=1e-15)

    @given(unit, unit, unit, unit)
    @settings(max_examples=500)
    def test_equals_product_identity(self, p_fp, p_occ, p_w, p_ism):
        lhs = not_relevant(p_fp, p_occ, p_w, p_ism)
        rhs = 1.0 - (1.0 - p_fp) * p_occ * p_w * p_ism
        assert abs(lhs - rhs) <= 1e-12
        assert -1e-12 <= lhs <= 1.0 + 1e-12


class TestLogAccumulator:
    def test_no_evidence_gives_zero_mass(self):
        assert bba_from_log_accumulator(0.0) == 0.0

    def test_single_half_probability(self):
        assert bba_from_log_accumulator(math.log(0.5)) == pytest.approx(0.5, abs=1e-15)

    def test_two_contributions_multiply(self):
        # 1 - 0.9 * 0.8 = 0.28
        out = bba_from_log_accumulator(math.log(0.9) + math.log(0.8))
        assert out == pytest.approx(0.28, abs=1e-12)

    def test_positive_log_sum_rejected(self):
        with pytest.raises(ValueError):
            bba_from_log_accumulator(1e-6)

    def test_tiny_positive_within_tolerance_allowed(self):
        assert bba_from_log_accumulator(0.5 * MASS_EPS) == 0.0

    @given(st.floats(min_value=-50.0, max_value=0.0), st.floats(min_value=-50.0, max_value=0.0))
    def test_monotone_decreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert bba_from_log_accumulator(lo) >= bba_from_log_accumulator(hi)


def coin_frame():
    return Frame(name="coin", members=("a", "b"),
                 addressable=(frozenset("a"), frozenset("b"), frozenset(("a", "b"))),
                 layer_names=("a", "b", "both"))


class TestPignistic:
    def test_total_ignorance_splits_evenly(self):
        frame = coin_frame()
        bba = BBA.from_dict(frame, {"both": 1.0})
        assert pignistic(bba, "a") == pytest.approx(0.5, abs=1e-15)

    def test_residual_ignorance_splits_evenly(self):
        frame = coin_frame()
        bba = BBA.from_dict(frame, {})  # residual 1 on the full frame
        assert pignistic(bba, "a") == pytest.approx(0.5, abs=1e-15)

    def test_bayesian_assignment_is_identity(self):
        bba = BBA.from_dict(GROUND, {"street": 0.6, "sidewalk": 0.3, "other_ground": 0.1})
        assert pignistic(bba, "street") == pytest.approx(0.6, abs=1e-15)
        assert pignistic(bba, "sidewalk") == pytest.approx(0.3, abs=1e-15)

    def test_mixed_focal_sets(self):
        # m({a,b}) = 0.6 contributes half, m({a}) = 0.4 fully: 0.7.
        frame = coin_frame()
        bba = BBA.from_dict(frame, {"both": 0.6, "a": 0.4})
        assert pignistic(bba, "a") == pytest.approx(0.7, abs=1e-15)

    def test_singletons_sum_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            raw = rng.uniform(0.0, 1.0, len(OCCUPANCY.addressable))
            raw *= rng.uniform(0.0, 1.0) / raw.sum()
            bba = BBA(OCCUPANCY, tuple(raw))
            total = sum(pignistic(bba, (m,)) for m in OCCUPANCY.members)
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_monotone_in_query(self):
        rng = np.random.default_rng(11)
        raw = rng.uniform(0.0, 1.0, len(OCCUPANCY.addressable))
        raw /= raw.sum() * 1.3
        bba = BBA(OCCUPANCY, tuple(raw))
        small = pignistic(bba, ("car",))
        big = pignistic(bba, ("car", "pedestrian", "free"))
        assert small <= big + 1e-15

    def test_layer_arrays_match_scalar_transform(self):
        rng = np.random.default_rng(3)
        shape = (4, 5)
        layers = {n: rng.uniform(0, 0.12, shape) for n in OCCUPANCY.layer_names}
        out = pignistic_layers(OCCUPANCY, layers, "object")
        i, j = 2, 3
        bba = BBA(OCCUPANCY, tuple(layers[n][i, j] for n in OCCUPANCY.layer_names))
        assert out[i, j] == pytest.approx(pignistic(bba, "object"), abs=1e-12)


class TestValidate:
    def test_all_zero_is_ok_with_full_residual(self):
        bba = BBA.from_dict(OCCUPANCY, {})
        report = validate(bba)
        assert report.ok
        assert bba.residual == pytest.approx(1.0)

    def test_excess_mass_reported_with_magnitude(self):
        bba = BBA.from_dict(OCCUPANCY, {"car": 0.9, "free": 0.6})
        report = validate(bba)
        assert not report.ok
        assert any("0.5" in p or "5.0" in p for p in report.problems)
        assert report.mass_sum == pytest.approx(1.5, abs=1e-12)

    def test_sum_within_epsilon_is_ok(self):
        bba = BBA.from_dict(GROUND, {"street": 0.5, "ground": 0.5 + 1e-12})
        assert validate(bba).ok


class TestFrames:
    def test_occupancy_frame_has_eight_addressable_layers(self):
        assert len(OCCUPANCY.addressable) == 8
        assert OCCUPANCY.hypothesis("object") == frozenset(
            ("car", "two_wheeler", "pedestrian", "other_mobile", "immobile"))

    def test_ground_frame_has_four_addressable_layers(self):
        assert len(GROUND.addressable) == 4
        assert GROUND.hypothesis("ground") == frozenset(
            ("street", "sidewalk", "other_ground"))

    def test_semantic_codes_round_trip(self):
        assert semantic_code("car") == 0
        assert semantic_code("street") == 5
        assert semantic_code("unlabeled") == -1
        with pytest.raises(ValueError):
            semantic_code("boat")

    def test_resolve_query_accepts_members_and_layers(self):
        assert OCCUPANCY.resolve_query("car") == frozenset(("car",))
        assert OCCUPANCY.resolve_query(("car", "free")) == frozenset(("car", "free"))
        with pytest.raises(KeyError):
            OCCUPANCY.resolve_query("street")
