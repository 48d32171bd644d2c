"""Point cloud to fixed-size grid tensors.

Covers the non-learned half of the BEV encoding stage: grouping points into
BEV cells, max-reduction of per-point features into a dense H x W x K map,
per-voxel ground-truth labels by majority vote, and the polar visibility
feature. All functions are pure and deterministic regardless of point order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PointCloud, PolarGridConfig, cells_of, to_polar

# visibility codes per voxel
VIS_UNKNOWN = 0
VIS_VISIBLE = 1
VIS_OCCLUDED = 2

POINT_FEATURE_DIM = 9


@dataclass(frozen=True, eq=False)
class GroupedCloud:
    """In-range points bucketed by their BEV cell (i, j).

    Attributes:
        cfg: grid the grouping was computed under.
        n_points: size of the source cloud (including out-of-range points).
        in_range: (N,) bool mask over the source cloud.
        order: (M,) original indices of in-range points, sorted by flat cell.
        ijk: (M, 3) int32 bin indices aligned with ``order``.
        unique_cells: (U,) sorted flat BEV ids (i * W + j) of occupied cells.
        starts: (U + 1,) bucket boundaries; bucket u owns
            ``order[starts[u]:starts[u + 1]]``.
    """

    cfg: PolarGridConfig
    n_points: int
    in_range: np.ndarray
    order: np.ndarray
    ijk: np.ndarray
    unique_cells: np.ndarray
    starts: np.ndarray

    @property
    def n_in_range(self) -> int:
        return len(self.order)

    def bucket(self, i: int, j: int) -> np.ndarray:
        """Original point indices in cell (i, j); empty when unoccupied."""
        flat = i * self.cfg.W + j
        pos = np.searchsorted(self.unique_cells, flat)
        if pos == len(self.unique_cells) or self.unique_cells[pos] != flat:
            return np.empty(0, dtype=self.order.dtype)
        return self.order[self.starts[pos]:self.starts[pos + 1]]


def group(points: PointCloud, cfg: PolarGridConfig) -> GroupedCloud:
    """Partition the in-range points of a cloud by BEV cell."""
    ijk, in_range = cells_of(points, cfg)
    idx = np.flatnonzero(in_range)
    flat = ijk[idx, 0].astype(np.int64) * cfg.W + ijk[idx, 1]
    perm = np.argsort(flat, kind="stable")
    order = idx[perm]
    flat = flat[perm]
    unique_cells, counts = np.unique(flat, return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)])
    return GroupedCloud(
        cfg=cfg,
        n_points=len(points),
        in_range=in_range,
        order=order,
        ijk=ijk[order],
        unique_cells=unique_cells,
        starts=starts,
    )


def point_features(points: PointCloud, cfg: PolarGridConfig) -> np.ndarray:
    """Handcrafted 9-channel per-point features for :func:`scatter_max`.

    Channels: x, y, z, reflectance, radial distance, azimuth, and the
    offsets of the point to its cell center along the three grid axes
    (meters / radians). Rows for out-of-range points use clamped bins and
    are only meaningful where the grouping mask holds.
    """
    xyz = points.xyz
    pol = to_polar(xyz)
    ijk, _ = cells_of(points, cfg)
    d_center = cfg.d_min + (ijk[:, 0] + 0.5) * cfg.radial_bin
    t_center = (ijk[:, 1] + 0.5) * cfg.angular_bin
    z_center = cfg.z_min + (ijk[:, 2] + 0.5) * cfg.z_bin
    feats = np.empty((len(points), POINT_FEATURE_DIM), dtype=np.float64)
    feats[:, 0:3] = xyz
    feats[:, 3] = points.reflectance
    feats[:, 4] = pol[:, 0]
    feats[:, 5] = pol[:, 1]
    feats[:, 6] = pol[:, 0] - d_center
    feats[:, 7] = pol[:, 1] - t_center
    feats[:, 8] = xyz[:, 2] - z_center
    return feats


def scatter_max(grouped: GroupedCloud, features: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Elementwise max of per-point features within each occupied BEV cell.

    Args:
        grouped: output of :func:`group`.
        features: (N, K) rows aligned with the source cloud.
        fill: value written to unoccupied cells.

    Returns:
        (H, W, K) float array; dtype follows ``features``.
    """
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[0] != grouped.n_points:
        raise ValueError(
            f"features must have shape ({grouped.n_points}, K), got {features.shape}"
        )
    cfg = grouped.cfg
    k = features.shape[1]
    out = np.full((cfg.H * cfg.W, k), fill, dtype=features.dtype)
    if len(grouped.order):
        reduced = np.maximum.reduceat(features[grouped.order], grouped.starts[:-1], axis=0)
        out[grouped.unique_cells] = reduced
    return out.reshape(cfg.H, cfg.W, k)


def _majority_per_key(keys: np.ndarray, values: np.ndarray, value_span: int) -> tuple[np.ndarray, np.ndarray]:
    """Modal value per key; ties resolved toward the smaller value.

    Order-independent: operates on (key, value) pair counts, not input order.
    """
    combo = keys.astype(np.int64) * value_span + values
    pairs, counts = np.unique(combo, return_counts=True)
    pk = pairs // value_span
    pv = pairs % value_span
    # sort by (key asc, count desc, value asc); first row per key wins
    sel = np.lexsort((pv, -counts, pk))
    uk, first = np.unique(pk[sel], return_index=True)
    return uk, pv[sel][first]


def voxel_labels(points: PointCloud, cfg: PolarGridConfig) -> np.ndarray:
    """Per-voxel ground-truth class by majority vote of member points.

    Ties go to the lower class id so the result is independent of point
    order. Empty voxels hold ``cfg.ignore_class``.

    Returns:
        (H, W, Z) int32 class ids.
    """
    if points.semantic is None:
        raise ValueError("voxel_labels needs a cloud with semantic labels")
    ijk, in_range = cells_of(points, cfg)
    out = np.full((cfg.H, cfg.W, cfg.Z), cfg.ignore_class, dtype=np.int32)
    if not in_range.any():
        return out
    sel = ijk[in_range]
    labels = points.semantic[in_range].astype(np.int64)
    if labels.min() < 0:
        raise ValueError("semantic labels must be nonnegative")
    voxel = (sel[:, 0].astype(np.int64) * cfg.W + sel[:, 1]) * cfg.Z + sel[:, 2]
    span = int(labels.max()) + 1
    keys, winners = _majority_per_key(voxel, labels, span)
    out.reshape(-1)[keys] = winners.astype(np.int32)
    return out


def visibility(points: PointCloud, cfg: PolarGridConfig) -> np.ndarray:
    """Visible/occluded/unknown state per voxel from radial ray traversal.

    For each (angular, height) column, every bin up to and including the
    farthest occupied radial bin is visible (the ray demonstrably crossed
    it), everything beyond is occluded, and columns without any return stay
    unknown. Single pass per column, O(N + H*W*Z).

    Returns:
        (H, W, Z) uint8 of VIS_* codes.
    """
    if cfg.mode != "polar":
        raise ValueError("visibility is defined for polar grids only")
    ijk, in_range = cells_of(points, cfg)
    last = np.full(cfg.W * cfg.Z, -1, dtype=np.int32)
    if in_range.any():
        sel = ijk[in_range]
        col = sel[:, 1].astype(np.int64) * cfg.Z + sel[:, 2]
        np.maximum.at(last, col, sel[:, 0])
    last = last.reshape(1, cfg.W, cfg.Z)
    radial = np.arange(cfg.H, dtype=np.int32).reshape(cfg.H, 1, 1)
    out = np.where(radial <= last, np.uint8(VIS_VISIBLE), np.uint8(VIS_OCCLUDED))
    out[:, last[0] < 0] = VIS_UNKNOWN
    return out
