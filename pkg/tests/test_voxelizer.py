import numpy as np
import pytest

from polarpanoptic import (
    VIS_OCCLUDED,
    VIS_UNKNOWN,
    VIS_VISIBLE,
    PointCloud,
    cells_of,
    group,
    point_features,
    scatter_max,
    visibility,
    voxel_labels,
)

from conftest import cloud_at, make_small_cfg, random_cloud


class TestGroup:
    def test_two_points_one_bucket(self, small_cfg):
        pc = cloud_at(small_cfg, [(10.2, 20.3, 1.0), (10.7, 20.9, 1.5)])
        g = group(pc, small_cfg)
        assert len(g.unique_cells) == 1
        assert sorted(g.bucket(10, 20).tolist()) == [0, 1]

    def test_out_of_range_point_empty(self, small_cfg):
        pc = PointCloud(np.array([[small_cfg.d_max + 5.0, 0.0, 0.0, 0.5]]))
        g = group(pc, small_cfg)
        assert g.n_in_range == 0
        assert len(g.unique_cells) == 0

    def test_empty_cloud(self, small_cfg):
        g = group(PointCloud(np.zeros((0, 4))), small_cfg)
        assert g.n_points == 0 and g.n_in_range == 0

    def test_partition_property(self, small_cfg):
        rng = np.random.default_rng(10)
        pc = random_cloud(rng, small_cfg, 5000, oob_fraction=0.1)
        g = group(pc, small_cfg)
        assert g.n_in_range == int(g.in_range.sum())
        assert len(np.unique(g.order)) == g.n_in_range
        sizes = np.diff(g.starts)
        assert sizes.sum() == g.n_in_range
        ijk, ok = cells_of(pc, small_cfg)
        flat = ijk[g.order, 0].astype(np.int64) * small_cfg.W + ijk[g.order, 1]
        assert np.array_equal(np.repeat(g.unique_cells, sizes), flat)

    def test_scan_scale_partition(self, small_cfg):
        # full-scan scale: ~1e5 returns, as on a real spinning scanner
        rng = np.random.default_rng(11)
        pc = random_cloud(rng, small_cfg, 104452, oob_fraction=0.05)
        g = group(pc, small_cfg)
        assert np.diff(g.starts).sum() == int(g.in_range.sum())


class TestScatterMax:
    def test_elementwise_max(self, small_cfg):
        pc = cloud_at(small_cfg, [(10.2, 20.3, 1.0), (10.7, 20.9, 1.5)])
        feats = np.array([[1.0, 5.0], [3.0, 2.0]])
        out = scatter_max(group(pc, small_cfg), feats)
        assert out.shape == (small_cfg.H, small_cfg.W, 2)
        assert out[10, 20].tolist() == [3.0, 5.0]

    def test_single_point_identity(self, small_cfg):
        pc = cloud_at(small_cfg, [(5.5, 7.5, 2.0)])
        out = scatter_max(group(pc, small_cfg), np.array([[4.0, -1.0, 9.0]]))
        assert out[5, 7].tolist() == [4.0, -1.0, 9.0]

    def test_empty_cell_fill(self, small_cfg):
        pc = cloud_at(small_cfg, [(5.5, 7.5, 2.0)])
        out = scatter_max(group(pc, small_cfg), np.array([[4.0]]), fill=-7.0)
        assert out[0, 0, 0] == -7.0

    def test_dimension_mismatch(self, small_cfg):
        pc = cloud_at(small_cfg, [(5.5, 7.5, 2.0)])
        with pytest.raises(ValueError):
            scatter_max(group(pc, small_cfg), np.zeros((3, 2)))

    def test_permutation_invariant_and_duplicate_idempotent(self, small_cfg):
        rng = np.random.default_rng(12)
        pc = random_cloud(rng, small_cfg, 800)
        feats = rng.normal(0, 1, (800, 4))
        base = scatter_max(group(pc, small_cfg), feats)
        perm = rng.permutation(800)
        pc2 = PointCloud(pc.points[perm])
        assert np.array_equal(scatter_max(group(pc2, small_cfg), feats[perm]), base)
        dup = rng.integers(0, 800, 50)
        pc3 = PointCloud(np.concatenate([pc.points, pc.points[dup]]))
        feats3 = np.concatenate([feats, feats[dup]])
        assert np.array_equal(scatter_max(group(pc3, small_cfg), feats3), base)

    def test_point_features_shape(self, small_cfg):
        rng = np.random.default_rng(13)
        pc = random_cloud(rng, small_cfg, 100)
        f = point_features(pc, small_cfg)
        assert f.shape == (100, 9)
        assert np.allclose(f[:, 0:3], pc.xyz)
        # offsets to the cell center stay within half a bin
        assert np.abs(f[:, 6]).max() <= small_cfg.radial_bin / 2 + 1e-9
        assert np.abs(f[:, 8]).max() <= small_cfg.z_bin / 2 + 1e-9


class TestVoxelLabels:
    def test_majority(self, small_cfg):
        pc = cloud_at(small_cfg, [(3.1, 4.1, 2.1)] * 2 + [(3.2, 4.2, 2.2)], semantic=[1, 1, 4])
        out = voxel_labels(pc, small_cfg)
        assert out[3, 4, 2] == 1

    def test_tie_is_order_independent(self, small_cfg):
        a = cloud_at(small_cfg, [(3.1, 4.1, 2.1), (3.2, 4.2, 2.2)], semantic=[1, 4])
        b = cloud_at(small_cfg, [(3.1, 4.1, 2.1), (3.2, 4.2, 2.2)], semantic=[4, 1])
        va = voxel_labels(a, small_cfg)
        vb = voxel_labels(b, small_cfg)
        assert va[3, 4, 2] == 1  # lower class id wins ties
        assert np.array_equal(va, vb)

    def test_empty_voxel_ignore(self, small_cfg):
        pc = cloud_at(small_cfg, [(3.1, 4.1, 2.1)], semantic=[1])
        out = voxel_labels(pc, small_cfg)
        assert out[0, 0, 0] == small_cfg.ignore_class

    def test_missing_labels_error(self, small_cfg):
        with pytest.raises(ValueError):
            voxel_labels(PointCloud(np.zeros((1, 4))), small_cfg)

    def test_permutation_invariant(self, small_cfg):
        rng = np.random.default_rng(14)
        pc = random_cloud(rng, small_cfg, 3000, with_labels=True)
        base = voxel_labels(pc, small_cfg)
        perm = rng.permutation(3000)
        pc2 = PointCloud(pc.points[perm], semantic=pc.semantic[perm], instance=pc.instance[perm])
        assert np.array_equal(voxel_labels(pc2, small_cfg), base)


class TestVisibility:
    def test_single_point_column(self, small_cfg):
        pc = cloud_at(small_cfg, [(10.5, 7.5, 3.5)])
        vis = visibility(pc, small_cfg)
        col = vis[:, 7, 3]
        assert (col[:11] == VIS_VISIBLE).all()
        assert (col[11:] == VIS_OCCLUDED).all()

    def test_empty_column_unknown(self, small_cfg):
        pc = cloud_at(small_cfg, [(10.5, 7.5, 3.5)])
        vis = visibility(pc, small_cfg)
        assert (vis[:, 0, 0] == VIS_UNKNOWN).all()

    def test_two_returns_union(self, small_cfg):
        pc = cloud_at(small_cfg, [(5.5, 7.5, 3.5), (20.5, 7.5, 3.5)])
        col = visibility(pc, small_cfg)[:, 7, 3]
        assert (col[:21] == VIS_VISIBLE).all()
        assert (col[21:] == VIS_OCCLUDED).all()

    def test_monotone_columns(self, small_cfg):
        rng = np.random.default_rng(15)
        for _ in range(20):
            pc = random_cloud(rng, small_cfg, 500)
            vis = visibility(pc, small_cfg)
            # no occluded bin may precede a visible bin along the ray
            occluded_seen = np.cumsum(vis == VIS_OCCLUDED, axis=0) > 0
            assert not ((vis == VIS_VISIBLE) & occluded_seen).any()

    def test_cartesian_rejected(self):
        cfg = make_small_cfg(mode="cartesian", d_min=-10, d_max=10, y_min=-10, y_max=10)
        with pytest.raises(ValueError):
            visibility(PointCloud(np.zeros((1, 4))), cfg)
