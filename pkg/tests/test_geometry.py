"""Geometry kernel tests: FPS, k-NN, normals, missing-part extraction."""
import numpy as np
import pytest

from proxycomplete.geometry import (
    downsample,
    estimate_normals,
    extract_missing_part,
    farthest_point_sample,
    knn,
    point_to_plane_distance,
    point_to_point_distance,
)

from oracles import fps_oracle, knn_oracle


class TestFarthestPointSample:
    def test_square_corners_picks_opposite(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
        assert farthest_point_sample(pts, 2, seed_index=0).tolist() == [0, 2]

    def test_exhaustion_is_permutation(self, rng):
        pts = rng.standard_normal((17, 3))
        idx = farthest_point_sample(pts, 17, seed_index=3)
        assert sorted(idx.tolist()) == list(range(17))

    def test_collinear_hand_case(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0]], float)
        assert farthest_point_sample(pts, 2, seed_index=0).tolist() == [0, 2]

    def test_matches_bruteforce_oracle(self, rng):
        for n in (2, 5, 9, 17, 32):
            pts = rng.standard_normal((n, 3))
            for m in (1, 2, n // 2 or 1, n):
                for seed_idx in (0, n - 1, n // 2):
                    got = farthest_point_sample(pts, m, seed_idx).tolist()
                    assert got == fps_oracle(pts, m, seed_idx), (n, m, seed_idx)

    def test_tie_break_lowest_index(self):
        # symmetric pair equidistant from the seed
        pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0]], float)
        assert farthest_point_sample(pts, 2, seed_index=0).tolist() == [0, 1]

    def test_default_seed_is_nearest_centroid(self):
        pts = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0], [3.4, 3.3, 0]], float)
        assert farthest_point_sample(pts, 1)[0] == 3

    def test_invalid_arguments(self, rng):
        pts = rng.standard_normal((4, 3))
        with pytest.raises(ValueError):
            farthest_point_sample(pts, 5)
        with pytest.raises(ValueError):
            farthest_point_sample(pts, 0)
        with pytest.raises(ValueError):
            farthest_point_sample(np.empty((0, 3)), 1)

    def test_pure(self, rng):
        pts = rng.standard_normal((20, 3))
        a = farthest_point_sample(pts, 7, 2)
        b = farthest_point_sample(pts, 7, 2)
        assert np.array_equal(a, b)


class TestKnn:
    def test_self_is_nearest(self, rng):
        pts = rng.standard_normal((10, 3))
        idx = knn(pts, pts, 1)
        assert idx[:, 0].tolist() == list(range(10))

    def test_hand_case(self):
        ref = np.array([[0, 0, 0], [2, 0, 0]], float)
        assert knn(ref, np.array([[0.9, 0, 0]]), 1)[0, 0] == 0

    def test_tie_rule_collinear(self):
        ref = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
        idx = knn(ref, np.array([[1.0, 0, 0]]), 3)
        assert idx[0].tolist() == [1, 0, 2]

    def test_matches_bruteforce_oracle(self, rng):
        for n in (1, 3, 16, 64):
            ref = rng.standard_normal((n, 3))
            queries = rng.standard_normal((7, 3))
            for k in {1, 2, n}:
                if k > n:
                    continue
                assert knn(ref, queries, k).tolist() == knn_oracle(ref, queries, k)

    def test_chunking_invariant(self, rng):
        ref = rng.standard_normal((50, 3))
        q = rng.standard_normal((23, 3))
        assert np.array_equal(knn(ref, q, 4, chunk=5), knn(ref, q, 4, chunk=1000))

    def test_k_out_of_range(self, rng):
        ref = rng.standard_normal((4, 3))
        with pytest.raises(ValueError):
            knn(ref, ref, 5)


class TestPointDistances:
    def test_point_to_point(self):
        assert point_to_point_distance((1, 2, 2), (0, 0, 0)) == pytest.approx(3.0)
        assert point_to_point_distance((1, 0, 0), (0, 0, 0)) == pytest.approx(1.0)
        assert point_to_point_distance((4, 5, 6), (4, 5, 6)) == 0.0

    def test_point_to_plane(self):
        assert point_to_plane_distance((0, 0, 5), (0, 0, 0), (0, 0, 1)) == pytest.approx(5.0)
        assert point_to_plane_distance((1, 1, 1), (0, 0, 0), (1, 0, 0)) == pytest.approx(1.0)
        # point inside the plane
        assert point_to_plane_distance((3, 4, 0), (1, 1, 0), (0, 0, 1)) == pytest.approx(0.0)

    def test_non_unit_normal_rejected(self):
        with pytest.raises(ValueError):
            point_to_plane_distance((1, 0, 0), (0, 0, 0), (0, 0, 2))


class TestEstimateNormals:
    def test_plane_returns_positive_z(self, rng):
        pts = np.column_stack([rng.uniform(-1, 1, 300), rng.uniform(-1, 1, 300), np.zeros(300)])
        field = estimate_normals(pts, 8)
        np.testing.assert_allclose(field.normals, np.tile([0.0, 0.0, 1.0], (300, 1)), atol=1e-6)
        assert field.degenerate_count == 0

    def test_cube_corner_matches_eigh_oracle(self):
        corners = np.array(
            [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float
        )
        field = estimate_normals(corners, 4)
        idx = knn(corners, corners, 4)
        for i in range(8):
            neigh = corners[idx[i]]
            centered = neigh - neigh.mean(axis=0)
            cov = centered.T @ centered / 4
            _, v = np.linalg.eigh(cov)
            expected = v[:, 0]
            # eigenvector direction is defined up to sign
            delta = min(
                np.abs(field.normals[i] - expected).max(),
                np.abs(field.normals[i] + expected).max(),
            )
            assert delta <= 1e-9

    def test_sphere_normals_near_radial(self, rng):
        v = rng.standard_normal((2048, 3))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
        field = estimate_normals(pts, 16)
        cos = np.abs(np.sum(field.normals * pts, axis=1))
        assert np.all(cos >= 0.95)

    def test_degenerate_neighborhood_flagged(self):
        pts = np.tile([0.5, 0.5, 0.5], (6, 1))
        field = estimate_normals(pts, 3)
        assert field.degenerate_count == 6
        np.testing.assert_array_equal(field.normals, np.tile([0, 0, 1.0], (6, 1)))

    def test_unit_length(self, rng):
        pts = rng.standard_normal((128, 3))
        field = estimate_normals(pts, 8)
        np.testing.assert_allclose(np.linalg.norm(field.normals, axis=1), 1.0, atol=1e-6)

    def test_largest_mode_differs_on_plane(self, rng):
        pts = np.column_stack([rng.uniform(-1, 1, 64), rng.uniform(-1, 1, 64), np.zeros(64)])
        field = estimate_normals(pts, 8, eigen_mode="largest")
        # in-plane direction: z component near zero
        assert np.all(np.abs(field.normals[:, 2]) < 1e-6)

    def test_preconditions(self, rng):
        pts = rng.standard_normal((10, 3))
        with pytest.raises(ValueError):
            estimate_normals(pts, 2)
        with pytest.raises(ValueError):
            estimate_normals(pts, 11)
        with pytest.raises(ValueError):
            estimate_normals(pts, 4, eigen_mode="median")


class TestExtractMissingPart:
    def test_identical_clouds_all_existing(self, rng):
        pts = rng.uniform(-1, 1, (64, 3))
        result = extract_missing_part(pts, pts)
        assert len(result.missing_idx) == 0
        assert len(result.existing_idx) == 64
        assert np.all(result.distances <= 1e-12)

    def test_partition_is_exact(self, rng):
        gt = rng.uniform(-1, 1, (128, 3))
        partial = gt[:80]
        result = extract_missing_part(gt, partial)
        merged = np.sort(np.concatenate([result.existing_idx, result.missing_idx]))
        assert merged.tolist() == list(range(128))
        assert len(np.intersect1d(result.existing_idx, result.missing_idx)) == 0

    def test_threshold_rule_matches_distances(self, rng):
        gt = rng.uniform(-1, 1, (96, 3))
        partial = gt[::2] + rng.normal(0, 0.002, (48, 3))
        result = extract_missing_part(gt, partial, threshold=0.01)
        for i in result.existing_idx:
            assert result.distances[i] <= 0.01
        for i in result.missing_idx:
            assert result.distances[i] > 0.01

    def test_permutation_invariance(self, rng):
        gt = rng.uniform(-1, 1, (100, 3))
        partial = gt[:60]
        base = extract_missing_part(gt, partial)
        shuffled = partial[rng.permutation(60)]
        again = extract_missing_part(gt, shuffled)
        assert np.array_equal(base.missing_idx, again.missing_idx)

    def test_cube_fixture_accuracy(self, cube_fixture):
        gt, partial, missing_mask = cube_fixture
        result = extract_missing_part(gt, partial)
        predicted = np.zeros(len(gt), bool)
        predicted[result.missing_idx] = True
        accuracy = np.mean(predicted == missing_mask)
        assert accuracy >= 0.99

    def test_partial_too_small(self, rng):
        with pytest.raises(ValueError):
            extract_missing_part(rng.uniform(-1, 1, (32, 3)), rng.uniform(-1, 1, (8, 3)))


class TestDownsample:
    def test_exhaustion_reorders(self, rng):
        pts = rng.standard_normal((12, 3))
        out = downsample(pts, 12)
        assert out.shape == (12, 3)
        assert {tuple(p) for p in out} == {tuple(p) for p in pts}

    def test_subsample_counts(self, rng):
        pts = rng.standard_normal((100, 3))
        assert downsample(pts, 37).shape == (37, 3)

    def test_pad_round_robin(self):
        pts = np.array([[0, 0, 0], [1, 0, 0]], float)
        out = downsample(pts, 4)
        np.testing.assert_array_equal(out, np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0], [1, 0, 0]]))

    def test_invalid(self, rng):
        with pytest.raises(ValueError):
            downsample(rng.standard_normal((4, 3)), 0)
