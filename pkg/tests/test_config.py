import pytest

from polarpanoptic import load_config, save_config
from polarpanoptic.config import PRESETS, config_from_dict, nuscenes_config, semantic_kitti_config


class TestPresets:
    def test_semantickitti_values(self):
        cfg = semantic_kitti_config()
        g = cfg.grid
        assert (g.d_min, g.d_max) == (3.0, 50.0)
        assert (g.z_min, g.z_max) == (-3.0, 1.5)
        assert (g.H, g.W, g.Z) == (480, 360, 32)
        assert g.min_instance_points == 50
        assert len(g.thing_classes) == 8 and len(g.stuff_classes) == 11
        assert cfg.fusion.nms_kernel == 5
        assert cfg.fusion.nms_threshold == 0.1
        assert cfg.fusion.top_k == 100
        assert cfg.heatmap_sigma == 5.0
        assert cfg.augment.paste_count == 5
        assert cfg.augment.p_rotation == 0.2
        assert cfg.augment.p_reflection == 0.2
        assert cfg.augment.local_translation_std == 0.5

    def test_nuscenes_values(self):
        g = nuscenes_config().grid
        assert (g.d_min, g.d_max) == (0.0, 50.0)
        assert (g.z_min, g.z_max) == (-5.0, 3.0)
        assert g.min_instance_points == 20
        assert len(g.thing_classes) == 10 and len(g.stuff_classes) == 6

    def test_load_by_name(self):
        for name in PRESETS:
            assert load_config(name).grid.H == 480


class TestFileRoundtrip:
    def test_yaml_roundtrip(self, tmp_path):
        cfg = semantic_kitti_config()
        path = tmp_path / "cfg.yaml"
        save_config(path, cfg)
        back = load_config(str(path))
        assert back == cfg

    def test_env_dir_resolution(self, tmp_path, monkeypatch):
        save_config(tmp_path / "mine.yaml", nuscenes_config())
        monkeypatch.setenv("POLARPANOPTIC_CONFIG_DIR", str(tmp_path))
        assert load_config("mine.yaml").grid.d_min == 0.0
        assert load_config("mine").grid.d_min == 0.0

    def test_missing_config(self):
        with pytest.raises(FileNotFoundError):
            load_config("does-not-exist")

    def test_unknown_section_rejected(self):
        with pytest.raises(ValueError, match="unknown config sections"):
            config_from_dict({"grid": {}, "bogus": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown keys"):
            config_from_dict({"grid": {"no_such_field": 1}})

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"grid": {"d_min": 9.0, "d_max": 3.0}})
        with pytest.raises(ValueError):
            config_from_dict({"fusion": {"nms_kernel": 2}})
