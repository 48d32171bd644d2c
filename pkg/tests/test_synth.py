import math

import numpy as np
import pytest

from polarpanoptic import (
    SynthSpec,
    bev_coords,
    gaussian_heatmap,
    instance_summaries,
    offset_field,
    synth_scene,
    voxel_labels,
)

from conftest import make_small_cfg


SPEC = SynthSpec(seed=3, instance_range=(3, 6), points_per_instance=(20, 40),
                 stuff_points=800, footprint_radius=(0.4, 0.9),
                 min_center_separation_cells=11.0)


class TestSynthScene:
    def test_seed_determinism(self, small_cfg):
        a = synth_scene(SPEC, small_cfg, sigma=3.0)
        b = synth_scene(SPEC, small_cfg, sigma=3.0)
        assert a.cloud.points.tobytes() == b.cloud.points.tobytes()
        assert a.heatmap.tobytes() == b.heatmap.tobytes()
        assert a.offsets.tobytes() == b.offsets.tobytes()
        assert a.semantic_voxels.tobytes() == b.semantic_voxels.tobytes()

    def test_zero_instances_stuff_only(self, small_cfg):
        spec = SynthSpec(seed=1, instance_range=(0, 0), stuff_points=500)
        scene = synth_scene(spec, small_cfg, sigma=3.0)
        assert scene.summaries == []
        assert scene.heatmap.sum() == 0.0
        assert (scene.cloud.instance == 0).all()
        assert len(scene.cloud) == 500

    def test_tensors_self_consistent(self, small_cfg):
        scene = synth_scene(SPEC, small_cfg, sigma=3.0)
        assert np.array_equal(scene.semantic_voxels, voxel_labels(scene.cloud, small_cfg))
        summaries = instance_summaries(scene.cloud, small_cfg)
        assert summaries == scene.summaries
        assert np.array_equal(scene.heatmap, gaussian_heatmap(summaries, 3.0, small_cfg))
        off, mask = offset_field(scene.cloud, summaries, small_cfg)
        assert np.array_equal(scene.offsets, off)
        assert np.array_equal(scene.foreground, mask)

    def test_min_center_separation(self, small_cfg):
        scene = synth_scene(SPEC, small_cfg, sigma=3.0)
        centers = [s.center for s in scene.summaries]
        for a in range(len(centers)):
            for b in range(a + 1, len(centers)):
                di = centers[a][0] - centers[b][0]
                dj = abs(centers[a][1] - centers[b][1])
                dj = min(dj, small_cfg.W - dj)
                # mass centers sit near the placement centers; allow slack
                # for the spread of the sampled disks
                assert math.hypot(di, dj) > SPEC.min_center_separation_cells - 4.0

    def test_points_all_in_range(self, small_cfg):
        from polarpanoptic import cells_of
        scene = synth_scene(SPEC, small_cfg, sigma=3.0)
        _, ok = cells_of(scene.cloud, small_cfg)
        assert ok.all()

    def test_instance_sizes_respect_config(self, small_cfg):
        scene = synth_scene(SPEC, small_cfg, sigma=3.0)
        for s in scene.summaries:
            assert s.point_count >= SPEC.points_per_instance[0] >= small_cfg.min_instance_points

    def test_overlap_pairs_share_cells(self):
        # needs a radially fine grid so partner centers stay NMS-separable
        cfg = make_small_cfg(H=256)
        spec = SynthSpec(seed=5, instance_range=(2, 3), points_per_instance=(60, 90),
                         stuff_points=300, footprint_radius=(0.7, 0.9),
                         min_center_separation_cells=11.0, overlap_pairs=1)
        scene = synth_scene(spec, cfg, sigma=3.0)
        ids = scene.cloud.instance
        coords = bev_coords(scene.cloud, cfg).astype(int)
        cells = {}
        shared = False
        for (i, j), inst in zip(coords, ids):
            if inst == 0:
                continue
            prev = cells.setdefault((i, j), inst)
            if prev != inst:
                shared = True
        assert shared

    def test_overlap_on_coarse_grid_refused(self, small_cfg):
        spec = SynthSpec(seed=5, instance_range=(2, 2), overlap_pairs=1,
                         footprint_radius=(0.7, 0.9), stuff_points=0)
        with pytest.raises(RuntimeError, match="too coarse"):
            synth_scene(spec, small_cfg, sigma=3.0)

    def test_noise_fields(self, small_cfg):
        spec = SynthSpec(seed=2, instance_range=(2, 3), stuff_points=200, noise_std=0.1,
                         points_per_instance=(20, 30), footprint_radius=(0.4, 0.8))
        scene = synth_scene(spec, small_cfg, sigma=3.0)
        assert scene.heatmap_noisy is not None and not np.array_equal(scene.heatmap_noisy, scene.heatmap)
        assert scene.heatmap_noisy.min() >= 0.0 and scene.heatmap_noisy.max() <= 1.0
        assert scene.offsets_noisy is not None
        assert scene.semantic_noisy is not None

    def test_infeasible_placement_errors(self):
        cfg = make_small_cfg(H=16, W=8, Z=4)
        spec = SynthSpec(seed=0, instance_range=(30, 30), stuff_points=0,
                         min_center_separation_cells=40.0, max_place_tries=20)
        with pytest.raises(RuntimeError):
            synth_scene(spec, cfg, sigma=3.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SynthSpec(instance_range=(5, 2))
        with pytest.raises(ValueError):
            SynthSpec(points_per_instance=(0, 5))
        with pytest.raises(ValueError):
            SynthSpec(noise_std=-1.0)
