import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcensemble.errors import BadKError, DegenerateCloudError
from pcensemble.geometry import (
    fps,
    knn,
    normalize_unit_sphere,
    pairwise_knn_table,
    rotation_matrix,
)

from conftest import random_cloud


def line_cloud(n):
    return np.array([[float(i), 0.0, 0.0] for i in range(n)])


# ---------------------------------------------------------------------------
# independent oracles: plain loops, tuple sorting, no shared code paths
# ---------------------------------------------------------------------------

def knn_oracle(points, query, k):
    scored = []
    for j, p in enumerate(points):
        if j == query:
            continue
        d2 = sum((points[query][c] - p[c]) ** 2 for c in range(3))
        scored.append((d2, j))
    scored.sort()
    return [j for _, j in scored[:k]]


def fps_oracle(points, k, start):
    selected = [start]
    while len(selected) < k:
        best = None
        for j in range(len(points)):
            if j in selected:
                continue
            dmin = min(
                sum((points[j][c] - points[s][c]) ** 2 for c in range(3)) for s in selected
            )
            if best is None or dmin > best[0]:
                best = (dmin, j)
        selected.append(best[1])
    return selected


class TestNormalize:
    def test_two_point_example(self):
        out = normalize_unit_sphere(np.array([[2.0, 0, 0], [0.0, 0, 0]]))
        np.testing.assert_allclose(out, [[1, 0, 0], [-1, 0, 0]], atol=1e-12)

    def test_already_normalized_is_identity(self):
        cloud = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0.0, 0, 0]])
        np.testing.assert_allclose(normalize_unit_sphere(cloud), cloud, atol=1e-12)

    def test_degenerate_cloud(self):
        with pytest.raises(DegenerateCloudError):
            normalize_unit_sphere(np.zeros((2, 3)))

    def test_postconditions(self, rng):
        cloud = random_cloud(rng, 50)
        out = normalize_unit_sphere(cloud)
        assert np.abs(out.mean(axis=0)).max() < 1e-6
        assert abs(np.linalg.norm(out, axis=1).max() - 1.0) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=40))
    def test_idempotent(self, seed, n):
        cloud = random_cloud(np.random.default_rng(seed), n)
        once = normalize_unit_sphere(cloud)
        np.testing.assert_allclose(normalize_unit_sphere(once), once, atol=1e-6)


class TestKnn:
    def test_line_example(self):
        assert knn(line_cloud(4), 0, 2).tolist() == [1, 2]

    def test_exhaustive_returns_everything_else(self, rng):
        cloud = random_cloud(rng, 9)
        assert sorted(knn(cloud, 4, 8).tolist()) == [0, 1, 2, 3, 5, 6, 7, 8]

    def test_tie_broken_by_index(self):
        square = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [1.0, 1, 0]])
        assert knn(square, 0, 2).tolist() == [1, 2]

    def test_bad_k(self):
        with pytest.raises(BadKError):
            knn(line_cloud(4), 0, 0)
        with pytest.raises(BadKError):
            knn(line_cloud(4), 0, 4)

    def test_matches_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 40))
            cloud = random_cloud(rng, n)
            q = int(rng.integers(n))
            k = int(rng.integers(1, n))
            assert knn(cloud, q, k).tolist() == knn_oracle(cloud, q, k)

    def test_deterministic(self, rng):
        cloud = random_cloud(rng, 30)
        assert knn(cloud, 3, 7).tolist() == knn(cloud, 3, 7).tolist()


class TestFps:
    def test_line_k2(self):
        assert fps(line_cloud(4), 2, 0).tolist() == [0, 3]

    def test_line_k3(self):
        assert fps(line_cloud(5), 3, 0).tolist() == [0, 4, 2]

    def test_single_selection(self, rng):
        cloud = random_cloud(rng, 10)
        assert fps(cloud, 1, 7).tolist() == [7]

    def test_bad_k(self):
        with pytest.raises(BadKError):
            fps(line_cloud(4), 5, 0)

    def test_matches_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 32))
            cloud = random_cloud(rng, n)
            k = int(rng.integers(1, n + 1))
            start = int(rng.integers(n))
            assert fps(cloud, k, start).tolist() == fps_oracle(cloud, k, start)

    def test_prefix_consistency(self, rng):
        # the greedy selection is incremental: fps(k) is a prefix of fps(N)
        for _ in range(10):
            n = int(rng.integers(2, 16))
            cloud = random_cloud(rng, n)
            start = int(rng.integers(n))
            full = fps(cloud, n, start).tolist()
            for k in range(1, n + 1):
                assert fps(cloud, k, start).tolist() == full[:k]

    def test_deterministic(self, rng):
        cloud = random_cloud(rng, 25)
        assert fps(cloud, 10, 3).tolist() == fps(cloud, 10, 3).tolist()


class TestKnnTable:
    def test_line_k1(self):
        assert pairwise_knn_table(line_cloud(3), 1).tolist() == [[1], [0], [1]]

    def test_two_points(self):
        assert pairwise_knn_table(line_cloud(2), 1).tolist() == [[1], [0]]

    def test_rows_match_knn(self, rng):
        cloud = random_cloud(rng, 32)
        table = pairwise_knn_table(cloud, 5)
        for i in range(32):
            assert table[i].tolist() == knn(cloud, i, 5).tolist()

    def test_bad_k(self):
        with pytest.raises(BadKError):
            pairwise_knn_table(line_cloud(3), 3)


def test_rotation_matrix_is_orthonormal(rng):
    axis = np.array([1.0, 2.0, 3.0])
    axis /= np.linalg.norm(axis)
    rot = rotation_matrix(axis, 0.7)
    np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(rot), 1.0, atol=1e-12)
