import numpy as np
import pytest

from pcensemble.sampling import (
    SampleKind,
    SamplingParams,
    extract_curve,
    extract_patch,
    extract_random,
    make_ensemble_inputs,
)

from conftest import random_cloud


def line_cloud(n):
    return np.array([[float(i), 0.0, 0.0] for i in range(n)])


class TestSamplingParams:
    def test_defaults(self):
        p = SamplingParams()
        assert (p.n_patch, p.n_curve, p.n_random) == (512, 512, 128)
        assert (p.m_neighbors, p.k_tilde) == (40, 4)

    def test_scaled_to_256(self):
        p = SamplingParams.scaled_to(256)
        assert (p.n_patch, p.n_curve, p.n_random) == (128, 128, 32)

    def test_scaled_floors(self):
        p = SamplingParams.scaled_to(64)
        assert (p.n_patch, p.n_curve, p.n_random) == (32, 32, 16)

    def test_large_clouds_keep_defaults(self):
        assert SamplingParams.scaled_to(2048) == SamplingParams()

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SamplingParams(n_patch=0)


class TestPatch:
    def test_line_example(self):
        params = SamplingParams(n_patch=3)
        sub = extract_patch(line_cloud(10), 0, params)
        assert sub.kind is SampleKind.PATCH
        assert sorted(sub.source_indices.tolist()) == [0, 1, 2]
        assert sub.anchor == 0 and sub.source_indices[0] == 0

    def test_saturation_gives_whole_cloud(self, rng):
        cloud = random_cloud(rng, 12)
        sub = extract_patch(cloud, 5, SamplingParams(n_patch=50))
        assert sorted(sub.source_indices.tolist()) == list(range(12))

    def test_distinct_and_sized(self, rng):
        cloud = random_cloud(rng, 64)
        sub = extract_patch(cloud, 10, SamplingParams(n_patch=20))
        assert len(sub.source_indices) == 20
        assert sub.unique_count == 20
        np.testing.assert_array_equal(sub.points, cloud[sub.source_indices])

    def test_compact_support(self, rng):
        # patches hug their anchor: strictly smaller reach than the full cloud
        params = SamplingParams(n_patch=16)
        strict = 0
        for seed in range(100):
            local = np.random.default_rng(seed)
            cloud = random_cloud(local, 64)
            anchor = int(local.integers(64))
            sub = extract_patch(cloud, anchor, params)
            reach = np.linalg.norm(sub.points - cloud[anchor], axis=1).max()
            full = np.linalg.norm(cloud - cloud[anchor], axis=1).max()
            assert reach <= full + 1e-12
            strict += reach < full
        assert strict > 90


class TestCurve:
    def test_single_neighbor_walk_oscillates(self, rng):
        params = SamplingParams(n_curve=4, m_neighbors=1)
        sub = extract_curve(line_cloud(3), 0, params, rng)
        assert sub.source_indices.tolist() == [0, 1, 0, 1]

    def test_length_one(self, rng):
        params = SamplingParams(n_curve=1, m_neighbors=2)
        sub = extract_curve(line_cloud(5), 3, params, rng)
        assert sub.source_indices.tolist() == [3]

    def test_replay_is_identical(self):
        cloud = random_cloud(np.random.default_rng(7), 64)
        params = SamplingParams(n_curve=50, m_neighbors=5)
        a = extract_curve(cloud, 0, params, np.random.default_rng(99))
        b = extract_curve(cloud, 0, params, np.random.default_rng(99))
        assert a.source_indices.tolist() == b.source_indices.tolist()

    def test_unique_count_bounded(self, rng):
        cloud = random_cloud(rng, 32)
        params = SamplingParams(n_curve=64, m_neighbors=4)
        sub = extract_curve(cloud, 0, params, rng)
        assert len(sub.source_indices) == 64
        assert sub.unique_count <= 64
        assert sub.source_indices[0] == 0


class TestRandom:
    def test_saturation_is_permutation(self, rng):
        cloud = random_cloud(rng, 10)
        sub = extract_random(cloud, SamplingParams(n_random=25), rng)
        assert sorted(sub.source_indices.tolist()) == list(range(10))

    def test_distinct_subset(self, rng):
        cloud = random_cloud(rng, 64)
        sub = extract_random(cloud, SamplingParams(n_random=16), rng)
        assert len(sub.source_indices) == 16
        assert sub.unique_count == 16
        assert sub.anchor is None

    def test_different_seeds_differ(self):
        cloud = random_cloud(np.random.default_rng(3), 64)
        params = SamplingParams(n_random=16)
        draws = {
            tuple(extract_random(cloud, params, np.random.default_rng(s)).source_indices)
            for s in range(100)
        }
        assert len(draws) > 95


class TestEnsembleInputs:
    @pytest.fixture
    def cloud(self, rng):
        return random_cloud(rng, 64)

    def test_counts_and_order(self, cloud, rng):
        params = SamplingParams(n_patch=16, n_curve=16, n_random=8, m_neighbors=6, k_tilde=4)
        subs = make_ensemble_inputs(cloud, params, rng)
        assert len(subs) == 12
        kinds = [s.kind for s in subs]
        assert kinds == [SampleKind.PATCH] * 4 + [SampleKind.CURVE] * 4 + [SampleKind.RANDOM] * 4

    def test_minimal_ensemble(self, cloud, rng):
        params = SamplingParams(n_patch=8, n_curve=8, n_random=4, m_neighbors=6, k_tilde=1)
        subs = make_ensemble_inputs(cloud, params, rng)
        assert len(subs) == 3

    def test_patch_and_curve_share_anchor(self, cloud, rng):
        params = SamplingParams(n_patch=8, n_curve=8, n_random=4, m_neighbors=6, k_tilde=3)
        subs = make_ensemble_inputs(cloud, params, rng)
        patches, curves = subs[:3], subs[3:6]
        for patch, curve in zip(patches, curves):
            assert patch.anchor == curve.anchor
            assert patch.source_indices[0] == patch.anchor
            assert curve.source_indices[0] == curve.anchor

    def test_reproducible(self, cloud):
        params = SamplingParams(n_patch=8, n_curve=8, n_random=4, m_neighbors=6, k_tilde=2)
        a = make_ensemble_inputs(cloud, params, np.random.default_rng(5))
        b = make_ensemble_inputs(cloud, params, np.random.default_rng(5))
        for sa, sb in zip(a, b):
            assert sa.source_indices.tolist() == sb.source_indices.tolist()
