import numpy as np
import pytest

from pcensemble.corruptions import (
    FAMILIES,
    CorruptionSpec,
    all_specs,
    apply_corruption,
    corrupted_test_set,
)
from pcensemble.data import LabeledCloud
from pcensemble.errors import TooFewPointsError
from pcensemble.geometry import normalize_unit_sphere

from conftest import random_cloud


@pytest.fixture
def cloud(rng):
    return normalize_unit_sphere(random_cloud(rng, 256))


def corrupt(cloud, family, severity, seed=0):
    return apply_corruption(CorruptionSpec(family, severity), cloud, np.random.default_rng(seed))


class TestSpec:
    def test_grid_has_35_specs(self):
        specs = all_specs()
        assert len(specs) == 35
        assert len(set(specs)) == 35

    def test_rejects_bad_family(self):
        with pytest.raises(ValueError):
            CorruptionSpec("melt", 1)

    def test_rejects_bad_severity(self):
        with pytest.raises(ValueError):
            CorruptionSpec("scale", 6)


class TestPointPreservingFamilies:
    @pytest.mark.parametrize("family", ["scale", "jitter", "rotate"])
    @pytest.mark.parametrize("severity", [1, 3, 5])
    def test_count_preserved(self, cloud, family, severity):
        out = corrupt(cloud, family, severity)
        assert out.shape == cloud.shape

    def test_rotate_is_isometry(self, cloud):
        out = corrupt(cloud, "rotate", 4)
        d_in = np.linalg.norm(cloud[:, None] - cloud[None, :], axis=-1)
        d_out = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
        np.testing.assert_allclose(d_out, d_in, atol=1e-6)

    def test_scale_keeps_order(self, cloud):
        out = corrupt(cloud, "scale", 5)
        ratio = out / cloud
        # one factor per axis, same for every point
        np.testing.assert_allclose(ratio, ratio[0], atol=1e-9)
        r = 1.0 + 0.2 * 5
        assert ((ratio[0] >= 1 / r - 1e-12) & (ratio[0] <= r + 1e-12)).all()

    def test_jitter_perturbation_scales_with_severity(self, cloud):
        lo = np.abs(corrupt(cloud, "jitter", 1) - cloud).std()
        hi = np.abs(corrupt(cloud, "jitter", 5) - cloud).std()
        assert hi > 3 * lo


class TestDropFamilies:
    def test_drop_global_count(self, cloud):
        out = corrupt(cloud, "drop_global", 2)
        assert out.shape[0] == 256 - int(256 * 0.30)  # 180

    def test_drop_global_is_subset_in_order(self, cloud):
        out = corrupt(cloud, "drop_global", 3)
        rows = {tuple(p) for p in cloud}
        assert all(tuple(p) in rows for p in out)
        # survivors keep original relative order
        idx = [np.flatnonzero((cloud == p).all(axis=1))[0] for p in out]
        assert idx == sorted(idx)

    def test_drop_global_too_few(self):
        small = normalize_unit_sphere(random_cloud(np.random.default_rng(1), 64))
        with pytest.raises(TooFewPointsError):
            corrupt(small, "drop_global", 5)  # 64 - 48 = 16 < 32

    def test_drop_local_counts_and_cap(self, cloud):
        out = corrupt(cloud, "drop_local", 3)
        assert out.shape[0] == 256 - 3 * int(256 * 0.15)
        small = normalize_unit_sphere(random_cloud(np.random.default_rng(2), 64))
        capped = corrupt(small, "drop_local", 5)
        assert capped.shape[0] == 32  # cap, not an error

    def test_drop_local_removes_clusters(self, cloud):
        out = corrupt(cloud, "drop_local", 1)
        removed = np.array(
            [p for p in cloud if not ((out == p).all(axis=1)).any()]
        )
        # a single cluster is metrically tight compared to the whole cloud
        spread = np.linalg.norm(removed - removed.mean(axis=0), axis=1).max()
        assert spread < 0.8


class TestAddFamilies:
    def test_add_global_count_and_prefix(self, cloud):
        out = corrupt(cloud, "add_global", 1)
        assert out.shape[0] == 256 + int(256 * 0.05)  # 268
        np.testing.assert_array_equal(out[:256], cloud)

    def test_add_global_inside_unit_sphere(self, cloud):
        out = corrupt(cloud, "add_global", 5)
        added = out[256:]
        assert (np.linalg.norm(added, axis=1) <= 1.0 + 1e-12).all()

    def test_add_local_prefix_and_count(self, cloud):
        out = corrupt(cloud, "add_local", 3)
        assert out.shape[0] == 256 + 3 * int(256 * 0.05)
        np.testing.assert_array_equal(out[:256], cloud)

    def test_add_local_blobs_hug_surface(self, cloud):
        out = corrupt(cloud, "add_local", 1)
        added = out[256:]
        d_to_cloud = np.linalg.norm(added[:, None] - cloud[None], axis=-1).min(axis=1)
        assert np.median(d_to_cloud) < 0.2


class TestDeterminism:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_same_seed_same_output(self, cloud, family):
        a = corrupt(cloud, family, 3, seed=11)
        b = corrupt(cloud, family, 3, seed=11)
        np.testing.assert_array_equal(a, b)


class TestCorruptedTestSet:
    @pytest.fixture
    def dataset(self, rng):
        return [
            LabeledCloud(normalize_unit_sphere(random_cloud(rng, 256)), i % 3, f"s{i:02d}")
            for i in range(6)
        ]

    def test_cardinality_and_labels(self, dataset):
        out = corrupted_test_set(dataset, seed=0)
        assert len(out) == 35
        for spec, samples in out.items():
            assert len(samples) == len(dataset)
            assert [s.label for s in samples] == [s.label for s in dataset]
            assert [s.sample_id for s in samples] == [s.sample_id for s in dataset]

    def test_replay_bit_identical(self, dataset):
        a = corrupted_test_set(dataset, seed=42)
        b = corrupted_test_set(dataset, seed=42)
        for spec in a:
            for sa, sb in zip(a[spec], b[spec]):
                np.testing.assert_array_equal(sa.points, sb.points)

    def test_drop_global_sizes_decrease_with_severity(self, dataset):
        out = corrupted_test_set(dataset, seed=0)
        sizes = [
            np.mean([s.points.shape[0] for s in out[CorruptionSpec("drop_global", sev)]])
            for sev in range(1, 6)
        ]
        assert all(a > b for a, b in zip(sizes, sizes[1:]))
