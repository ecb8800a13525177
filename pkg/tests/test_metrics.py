"""Metric tests: hand values, brute-force oracle equivalence, invariants."""
import json

import numpy as np
import pytest

from proxycomplete.metrics import (
    MetricReport,
    chamfer_l1,
    chamfer_l2,
    dcd,
    fidelity,
    fscore,
    full_report,
    mmd,
)

from oracles import (
    chamfer_l1_oracle,
    chamfer_l2_oracle,
    dcd_oracle,
    fidelity_oracle,
    fscore_oracle,
)


def clouds(rng, n_max=64):
    a = rng.uniform(-1, 1, (int(rng.integers(1, n_max + 1)), 3))
    b = rng.uniform(-1, 1, (int(rng.integers(1, n_max + 1)), 3))
    return a, b


class TestChamfer:
    def test_identical_zero(self, rng):
        a = rng.uniform(-1, 1, (32, 3))
        assert chamfer_l1(a, a) == 0.0
        assert chamfer_l2(a, a) == 0.0

    def test_hand_values(self):
        a = np.array([[0.0, 0, 0]])
        b = np.array([[1.0, 0, 0]])
        assert chamfer_l1(a, b) == pytest.approx(1.0)
        assert chamfer_l2(a, b) == pytest.approx(2.0)
        a2 = np.array([[0.0, 0, 0], [2, 0, 0]])
        assert chamfer_l1(a2, b) == pytest.approx(1.0)
        a3 = np.array([[0.0, 0, 0], [1, 0, 0]])
        assert chamfer_l2(a3, np.array([[0.0, 0, 0]])) == pytest.approx(0.5)

    def test_oracle_equivalence(self, rng):
        for _ in range(25):
            a, b = clouds(rng)
            assert chamfer_l1(a, b) == pytest.approx(chamfer_l1_oracle(a, b), abs=1e-9)
            assert chamfer_l2(a, b) == pytest.approx(chamfer_l2_oracle(a, b), abs=1e-9)

    def test_symmetry_and_permutation_invariance(self, rng):
        a, b = clouds(rng)
        assert chamfer_l1(a, b) == pytest.approx(chamfer_l1(b, a), abs=1e-12)
        assert chamfer_l2(a, b) == pytest.approx(chamfer_l2(b, a), abs=1e-12)
        pa = a[rng.permutation(len(a))]
        assert chamfer_l1(pa, b) == pytest.approx(chamfer_l1(a, b), abs=1e-12)

    def test_zero_iff_equal_sets(self, rng):
        a = rng.uniform(-1, 1, (16, 3))
        shuffled = a[rng.permutation(16)]
        assert chamfer_l1(a, shuffled) == 0.0
        moved = a.copy()
        moved[3] += 0.1
        assert chamfer_l1(a, moved) > 0.0


class TestDcd:
    def test_identity_zero_without_duplicates(self, rng):
        a = rng.uniform(-1, 1, (40, 3))
        assert dcd(a, a) == 0.0

    def test_duplicate_hand_case(self):
        p = [0.3, -0.2, 0.9]
        assert dcd(np.array([p, p]), np.array([p])) == pytest.approx(0.25, abs=1e-15)

    def test_bounds(self, rng):
        for _ in range(200):
            a, b = clouds(rng, n_max=24)
            value = dcd(a, b)
            assert 0.0 <= value <= 1.0

    def test_oracle_equivalence(self, rng):
        for _ in range(25):
            a, b = clouds(rng)
            assert dcd(a, b) == pytest.approx(dcd_oracle(a, b), abs=1e-9)

    def test_temperature_default_and_effect(self, rng):
        a, b = clouds(rng)
        assert dcd(a, b) == dcd(a, b, temperature=1000.0)
        assert dcd(a, b, temperature=1.0) <= dcd(a, b, temperature=1000.0)


class TestFscore:
    def test_identity_one(self, rng):
        a = rng.uniform(-1, 1, (16, 3))
        assert fscore(a, a) == 1.0

    def test_disjoint_zero(self):
        a = np.zeros((4, 3))
        b = np.ones((4, 3))
        assert fscore(a, b, threshold=0.01) == 0.0

    def test_hand_case(self):
        a = np.array([[0.0, 0, 0], [1, 0, 0]])
        b = np.array([[0.0, 0, 0]])
        assert fscore(a, b, threshold=0.5) == pytest.approx(2.0 / 3.0)

    def test_monotone_in_threshold(self, rng):
        a, b = clouds(rng)
        values = [fscore(a, b, t) for t in (0.001, 0.01, 0.1, 0.5, 2.0)]
        assert values == sorted(values)

    def test_oracle_equivalence(self, rng):
        for _ in range(25):
            a, b = clouds(rng)
            assert fscore(a, b, 0.3) == pytest.approx(fscore_oracle(a, b, 0.3), abs=1e-9)


class TestFidelityMmd:
    def test_fidelity_zero_when_contained(self, rng):
        partial = rng.uniform(-1, 1, (20, 3))
        output = np.vstack([partial, rng.uniform(-1, 1, (30, 3))])
        assert fidelity(partial, output) == 0.0

    def test_fidelity_hand_case(self):
        assert fidelity(np.zeros((1, 3)), np.array([[1.0, 0, 0]])) == pytest.approx(1.0)

    def test_fidelity_oracle(self, rng):
        for _ in range(25):
            a, b = clouds(rng)
            assert fidelity(a, b) == pytest.approx(fidelity_oracle(a, b), abs=1e-9)

    def test_mmd_contains_output(self, rng):
        out = rng.uniform(-1, 1, (16, 3))
        others = [rng.uniform(-1, 1, (16, 3)) for _ in range(3)]
        assert mmd(out, others + [out]) == 0.0

    def test_mmd_picks_smaller(self):
        out = np.zeros((2, 3))
        near = np.zeros((2, 3)) + 0.01
        far = np.ones((2, 3))
        assert mmd(out, [far, near]) == pytest.approx(chamfer_l2(out, near))

    def test_mmd_single_candidate(self, rng):
        a, b = clouds(rng)
        assert mmd(a, [b]) == pytest.approx(chamfer_l2(a, b))

    def test_mmd_empty_candidates(self, rng):
        with pytest.raises(ValueError):
            mmd(rng.uniform(-1, 1, (4, 3)), [])


class TestMetricReport:
    def test_json_keys_fixed(self, rng):
        a, b = clouds(rng)
        report = full_report(a, b, partial=a)
        data = json.loads(report.to_json())
        assert list(data) == ["cd_l1", "cd_l2_x1000", "dcd", "fscore", "fidelity", "mmd"]
        assert data["cd_l2_x1000"] == pytest.approx(report.cd_l2 * 1000.0)
        assert data["mmd"] is None

    def test_round_trip(self, rng):
        a, b = clouds(rng)
        report = full_report(a, b, partial=a, candidates=[b])
        again = MetricReport.from_dict(json.loads(report.to_json()))
        assert again == report

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            chamfer_l1(np.empty((0, 3)), np.zeros((1, 3)))
        with pytest.raises(ValueError):
            dcd(np.zeros((1, 3)), np.empty((0, 3)))
