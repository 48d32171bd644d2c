"""In-memory bindings of the panoptic fusion and metric suite.

For training and evaluation loops that already hold predictions as arrays:
``fuse_arrays`` and ``evaluate_arrays`` accept contiguous numpy buffers with
the same dtypes the tensor container uses on disk (float32 maps, uint32
labels) and produce results bit-identical to running the CLI over
serialized files. Inputs are validated, never copied on the happy path, and
the heavy numpy sections release the interpreter lock, so concurrent calls
from multiple host threads are fine.

Only fusion and evaluation are bound; voxelization and augmentation stay on
the CLI surface.
"""

from __future__ import annotations

import numpy as np

from polarpanoptic import FusionParams, PanopticLabeling, PointCloud, PolarGridConfig
from polarpanoptic.config import PRESETS
from polarpanoptic.fusion import fuse as _fuse
from polarpanoptic.metrics import evaluate as _evaluate

__all__ = [
    "ArrayContractError",
    "fuse_arrays",
    "evaluate_arrays",
    "grid_config",
    "fusion_params",
    "__version__",
]

__version__ = "0.1.0"


class ArrayContractError(ValueError):
    """An input array violates the binding's shape/dtype/layout contract."""


def _require(array, name: str, dtypes: tuple, ndims: tuple) -> np.ndarray:
    if not isinstance(array, np.ndarray):
        raise ArrayContractError(f"{name}: expected a numpy array, got {type(array).__name__}")
    if array.dtype not in dtypes:
        wanted = ", ".join(np.dtype(d).name for d in dtypes)
        raise ArrayContractError(f"{name}: dtype {array.dtype} not accepted (use {wanted})")
    if array.ndim not in ndims:
        raise ArrayContractError(f"{name}: expected {ndims}-dimensional data, got shape {array.shape}")
    if not array.flags["C_CONTIGUOUS"]:
        raise ArrayContractError(f"{name}: array must be C-contiguous")
    return array


def _shape_check(array: np.ndarray, name: str, expected: tuple) -> None:
    if array.shape[: len(expected)] != expected:
        raise ArrayContractError(f"{name}: expected shape {expected}..., got {array.shape}")


def grid_config(preset: str = "semantickitti", **overrides) -> PolarGridConfig:
    """Grid configuration from a preset name, with field overrides."""
    if preset not in PRESETS:
        raise ArrayContractError(f"preset: unknown name {preset!r} (use one of {sorted(PRESETS)})")
    base = PRESETS[preset]().grid
    if not overrides:
        return base
    import dataclasses

    return dataclasses.replace(base, **overrides)


def fusion_params(**kwargs) -> FusionParams:
    """Center-selection parameters; defaults match the CLI."""
    return FusionParams(**kwargs)


def fuse_arrays(
    semantic: np.ndarray,
    heatmap: np.ndarray,
    offsets: np.ndarray,
    points: np.ndarray,
    config: PolarGridConfig,
    params: FusionParams | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Panoptic fusion over in-memory arrays.

    Args:
        semantic: (H, W, Z) uint32/int32 voxel labels or (H, W, Z, C)
            float32 voxel class probabilities.
        heatmap: (H, W) float32 center heatmap.
        offsets: (H, W, 2) float32 pixel-to-center offsets.
        points: (N, 4) float32 x, y, z, reflectance rows.
        config: grid configuration the tensors were produced under.
        params: optional center-selection parameters.

    Returns:
        (semantic, instance): two int32 arrays of length N, bit-identical
        to the CLI ``fuse`` run on the same data serialized through the
        tensor container.
    """
    semantic = _require(semantic, "semantic", (np.uint32, np.int32, np.float32), (3, 4))
    if semantic.ndim == 4 and semantic.dtype != np.float32:
        raise ArrayContractError(f"semantic: 4-D probabilities must be float32, got {semantic.dtype}")
    if semantic.ndim == 3 and semantic.dtype == np.float32:
        raise ArrayContractError("semantic: 3-D input must carry integer voxel labels")
    heatmap = _require(heatmap, "heatmap", (np.float32, np.float64), (2,))
    offsets = _require(offsets, "offsets", (np.float32, np.float64), (3,))
    points = _require(points, "points", (np.float32, np.float64), (2,))
    grid_shape = (config.H, config.W, config.Z)
    _shape_check(semantic, "semantic", grid_shape)
    _shape_check(heatmap, "heatmap", (config.H, config.W))
    _shape_check(offsets, "offsets", (config.H, config.W, 2))
    if points.shape[1:] != (4,):
        raise ArrayContractError(f"points: expected shape (N, 4), got {points.shape}")
    if semantic.dtype == np.uint32:
        semantic = semantic.view(np.int32)  # reinterpret, no copy
    labeling = _fuse(semantic, heatmap, offsets, PointCloud(points), config, params)
    return labeling.semantic, labeling.instance


def evaluate_arrays(
    pred_semantic: np.ndarray,
    pred_instance: np.ndarray,
    gt_semantic: np.ndarray,
    gt_instance: np.ndarray,
    config: PolarGridConfig,
) -> dict:
    """Panoptic quality and mIoU of array labelings, as a plain mapping.

    Values equal the CLI ``eval`` JSON output to full precision.
    """
    arrays = {}
    for name, arr in (("pred_semantic", pred_semantic), ("pred_instance", pred_instance),
                      ("gt_semantic", gt_semantic), ("gt_instance", gt_instance)):
        arrays[name] = _require(arr, name, (np.uint32, np.int32, np.uint16, np.int64), (1,))
    n = len(arrays["gt_semantic"])
    for name, arr in arrays.items():
        if len(arr) != n:
            raise ArrayContractError(f"{name}: length {len(arr)} does not match gt_semantic ({n})")
    pred = PanopticLabeling(arrays["pred_semantic"], arrays["pred_instance"])
    gt = PanopticLabeling(arrays["gt_semantic"], arrays["gt_instance"])
    return _evaluate(pred, gt, config).as_dict()
