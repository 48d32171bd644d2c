"""Proposal-free LiDAR panoptic segmentation pipeline on a polar BEV grid.

The package covers everything around the learned network: grid
quantization, point grouping and feature scatter, visibility, training
targets (center heatmaps and offsets), the heatmap/offset fusion that turns
predictions into per-point instances, projection-preserving augmentation,
the PQ/mIoU metric suite, bit-exact file formats, a synthetic-scene oracle,
and a CLI tying it all together.
"""

from .augment import (
    AugmentParams,
    InstanceBank,
    augment_instances,
    augment_scan,
    build_bank,
    global_augment,
    load_bank,
    local_augment,
    oversample,
    prune_by_importance,
    save_bank,
    scene_augment,
)
from .config import PipelineConfig, load_config, nuscenes_config, save_config, semantic_kitti_config
from .fusion import (
    FusionParams,
    PanopticLabeling,
    foreground_mask,
    fuse,
    group_by_center,
    lift_to_points,
    nms_topk,
    vote_labels,
)
from .grid import CellIndex, PointCloud, PolarGridConfig, bev_coords, cell_of, cells_of, from_polar, to_polar
from .metrics import MetricReport, evaluate, match, miou, panoptic_quality, segment_sets
from .synth import SynthScene, SynthSpec, synth_scene
from .targets import InstanceSummary, gaussian_heatmap, instance_summaries, offset_field, pixel_instance_map
from .voxelizer import (
    VIS_OCCLUDED,
    VIS_UNKNOWN,
    VIS_VISIBLE,
    GroupedCloud,
    group,
    point_features,
    scatter_max,
    visibility,
    voxel_labels,
)

__version__ = "0.1.0"
