"""Pipeline configuration: presets, YAML round-trip, name/path resolution.

A configuration file is one YAML document with ``grid``, ``fusion``,
``augment``, ``targets``, and ``class_names`` sections; every field has a
documented default, so a bare preset name reproduces the published grid and
fusion hyperparameters for the corresponding dataset. ``load_config``
resolves, in order: a built-in preset name, a filesystem path, and a file
of that name under ``$POLARPANOPTIC_CONFIG_DIR``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .augment import AugmentParams
from .fusion import FusionParams
from .grid import PolarGridConfig

CONFIG_DIR_ENV = "POLARPANOPTIC_CONFIG_DIR"

_KITTI_THINGS = {
    1: "car", 2: "bicycle", 3: "motorcycle", 4: "truck", 5: "other-vehicle",
    6: "person", 7: "bicyclist", 8: "motorcyclist",
}
_KITTI_STUFF = {
    9: "road", 10: "parking", 11: "sidewalk", 12: "other-ground", 13: "building",
    14: "fence", 15: "vegetation", 16: "trunk", 17: "terrain", 18: "pole",
    19: "traffic-sign",
}
_NUSC_THINGS = {
    1: "barrier", 2: "bicycle", 3: "bus", 4: "car", 5: "construction-vehicle",
    6: "motorcycle", 7: "pedestrian", 8: "traffic-cone", 9: "trailer", 10: "truck",
}
_NUSC_STUFF = {
    11: "driveable-surface", 12: "other-flat", 13: "sidewalk", 14: "terrain",
    15: "manmade", 16: "vegetation",
}


@dataclass(frozen=True)
class PipelineConfig:
    """Bundle of every tunable the CLI and library consume."""

    grid: PolarGridConfig = field(default_factory=PolarGridConfig)
    fusion: FusionParams = field(default_factory=FusionParams)
    augment: AugmentParams = field(default_factory=AugmentParams)
    heatmap_sigma: float = 5.0
    class_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.heatmap_sigma <= 0:
            raise ValueError(f"heatmap_sigma must be positive, got {self.heatmap_sigma}")

    def to_dict(self) -> dict:
        grid = dataclasses.asdict(self.grid)
        grid["thing_classes"] = sorted(self.grid.thing_classes)
        grid["stuff_classes"] = sorted(self.grid.stuff_classes)
        return {
            "grid": grid,
            "fusion": dataclasses.asdict(self.fusion),
            "augment": dataclasses.asdict(self.augment),
            "targets": {"heatmap_sigma": self.heatmap_sigma},
            "class_names": {int(k): v for k, v in sorted(self.class_names.items())},
        }


def _section(data: dict, name: str, cls):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ValueError(f"config section {name!r} must be a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - {"grid", "fusion", "augment", "targets", "class_names"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    targets = data.get("targets", {})
    if not isinstance(targets, dict) or set(targets) - {"heatmap_sigma"}:
        raise ValueError("config section 'targets' accepts only 'heatmap_sigma'")
    names = data.get("class_names", {}) or {}
    return PipelineConfig(
        grid=_section(data, "grid", PolarGridConfig),
        fusion=_section(data, "fusion", FusionParams),
        augment=_section(data, "augment", AugmentParams),
        heatmap_sigma=float(targets.get("heatmap_sigma", 5.0)),
        class_names={int(k): str(v) for k, v in names.items()},
    )


def semantic_kitti_config() -> PipelineConfig:
    grid = PolarGridConfig(
        d_min=3.0, d_max=50.0, z_min=-3.0, z_max=1.5, H=480, W=360, Z=32,
        thing_classes=frozenset(_KITTI_THINGS), stuff_classes=frozenset(_KITTI_STUFF),
        ignore_class=0, min_instance_points=50,
    )
    return PipelineConfig(grid=grid, class_names={0: "unlabeled", **_KITTI_THINGS, **_KITTI_STUFF})


def nuscenes_config() -> PipelineConfig:
    grid = PolarGridConfig(
        d_min=0.0, d_max=50.0, z_min=-5.0, z_max=3.0, H=480, W=360, Z=32,
        thing_classes=frozenset(_NUSC_THINGS), stuff_classes=frozenset(_NUSC_STUFF),
        ignore_class=0, min_instance_points=20,
    )
    return PipelineConfig(grid=grid, class_names={0: "ignore", **_NUSC_THINGS, **_NUSC_STUFF})


PRESETS = {
    "semantickitti": semantic_kitti_config,
    "nuscenes": nuscenes_config,
}


def save_config(path: str | os.PathLike, cfg: PipelineConfig) -> None:
    from .formats import atomic_write_bytes

    text = yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)
    atomic_write_bytes(path, text.encode())


def load_config(name_or_path: str) -> PipelineConfig:
    """Resolve a preset name, a path, or a file in the config directory."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    candidates = [name_or_path]
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if env_dir:
        candidates.append(os.path.join(env_dir, name_or_path))
        candidates.append(os.path.join(env_dir, name_or_path + ".yaml"))
    for cand in candidates:
        if os.path.isfile(cand):
            with open(cand, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
            if not isinstance(data, dict):
                raise ValueError(f"{cand}: config must be a YAML mapping")
            return config_from_dict(data)
    raise FileNotFoundError(
        f"no such config: {name_or_path!r} is not a preset ({', '.join(sorted(PRESETS))}) or a readable file"
    )
