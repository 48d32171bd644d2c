"""Domain types, coordinate transforms, and the BEV grid-indexing contract.

Everything downstream (voxelization, target generation, fusion, metrics)
indexes the scene through the conventions defined here:

* radial bin ``i`` runs over ``[0, H)`` covering ``[d_min, d_max]`` meters,
* angular bin ``j`` runs over ``[0, W)`` covering ``[0, 2*pi)`` radians,
* height bin ``k`` runs over ``[0, Z)`` covering ``[z_min, z_max]`` meters.

Values landing exactly on the upper range boundary clamp into the last bin,
so ``d == d_max`` is representable. Points outside the configured ranges are
out of range; by default they are dropped during voxelization.

All types are immutable after construction and safe to share across threads;
every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class CellIndex(NamedTuple):
    """Discrete grid cell: radial bin i, angular bin j, optional height bin k."""

    i: int
    j: int
    k: int | None = None


@dataclass(frozen=True)
class PolarGridConfig:
    """Quantization contract shared by the whole pipeline.

    Attributes:
        d_min, d_max: radial range in meters (first grid axis). In cartesian
            mode these bound the x axis instead.
        z_min, z_max: height range in meters (third grid axis).
        H, W, Z: bin counts for the radial/angular/height axes.
        thing_classes: class ids that carry instance ids.
        stuff_classes: amorphous class ids (semantic label only).
        ignore_class: unlabeled/void class id; excluded from evaluation.
        min_instance_points: ground-truth instances below this size are not
            evaluated (and not banked for oversampling).
        mode: "polar" (default) or "cartesian". Cartesian bins x over
            [d_min, d_max] and y over [y_min, y_max]; the angular axis
            conventions (wrap-around, circular means) do not apply.
        oob_policy: "drop" leaves out-of-range points unassigned, "clamp"
            forces them into the boundary bins.
        mirror_wrap_centers: when True, heatmap rendering paints a mirrored
            copy of the Gaussian for instances whose angular extent crosses
            the j=0 seam.
    """

    d_min: float = 3.0
    d_max: float = 50.0
    z_min: float = -3.0
    z_max: float = 1.5
    H: int = 480
    W: int = 360
    Z: int = 32
    thing_classes: frozenset[int] = field(default_factory=frozenset)
    stuff_classes: frozenset[int] = field(default_factory=frozenset)
    ignore_class: int = 0
    min_instance_points: int = 50
    mode: str = "polar"
    y_min: float = 0.0
    y_max: float = 0.0
    oob_policy: str = "drop"
    mirror_wrap_centers: bool = False

    def __post_init__(self):
        object.__setattr__(self, "thing_classes", frozenset(int(c) for c in self.thing_classes))
        object.__setattr__(self, "stuff_classes", frozenset(int(c) for c in self.stuff_classes))
        if not (self.d_min < self.d_max):
            raise ValueError(f"d_min must be < d_max, got [{self.d_min}, {self.d_max}]")
        if not (self.z_min < self.z_max):
            raise ValueError(f"z_min must be < z_max, got [{self.z_min}, {self.z_max}]")
        if min(self.H, self.W, self.Z) < 1:
            raise ValueError(f"bin counts must be >= 1, got ({self.H}, {self.W}, {self.Z})")
        if self.thing_classes & self.stuff_classes:
            raise ValueError(f"thing/stuff classes overlap: {sorted(self.thing_classes & self.stuff_classes)}")
        if self.ignore_class in self.thing_classes or self.ignore_class in self.stuff_classes:
            raise ValueError(f"ignore_class {self.ignore_class} must not be a thing or stuff class")
        if self.min_instance_points < 1:
            raise ValueError(f"min_instance_points must be >= 1, got {self.min_instance_points}")
        if self.mode not in ("polar", "cartesian"):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.mode == "cartesian" and not (self.y_min < self.y_max):
            raise ValueError(f"cartesian mode needs y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if self.oob_policy not in ("drop", "clamp"):
            raise ValueError(f"unknown oob_policy {self.oob_policy!r}")
        if any(c < 0 for c in self.thing_classes | self.stuff_classes | {self.ignore_class}):
            raise ValueError("class ids must be nonnegative")

    @property
    def radial_bin(self) -> float:
        return (self.d_max - self.d_min) / self.H

    @property
    def angular_bin(self) -> float:
        if self.mode == "cartesian":
            return (self.y_max - self.y_min) / self.W
        return TWO_PI / self.W

    @property
    def z_bin(self) -> float:
        return (self.z_max - self.z_min) / self.Z

    @property
    def evaluated_classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.thing_classes | self.stuff_classes))

    @property
    def num_label_values(self) -> int:
        """Smallest lookup-table size covering all configured class ids."""
        return max((*self.evaluated_classes, self.ignore_class), default=0) + 1


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A LiDAR scan: per-point (x, y, z, reflectance) plus optional labels.

    Arrays are copied on construction and frozen; instances may be shared
    freely across threads.
    """

    points: np.ndarray
    semantic: np.ndarray | None = None
    instance: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, copy=True)
        if pts.dtype not in (np.float32, np.float64):
            pts = pts.astype(np.float64)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"points must have shape (N, 4), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points contain non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        for name in ("semantic", "instance"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=np.int32, copy=True)
            if arr.shape != (len(pts),):
                raise ValueError(f"{name} has length {arr.shape}, expected ({len(pts)},)")
            if name == "instance" and arr.min(initial=0) < 0:
                raise ValueError("instance ids must be nonnegative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def reflectance(self) -> np.ndarray:
        return self.points[:, 3]

    def validate_labels(self, cfg: PolarGridConfig) -> None:
        """Check that instance ids only appear on thing-class points."""
        if self.semantic is None or self.instance is None:
            return
        active = self.instance > 0
        if active.any():
            thing = np.isin(self.semantic[active], sorted(cfg.thing_classes))
            if not thing.all():
                bad = np.unique(self.semantic[active][~thing])
                raise ValueError(f"instance ids on non-thing classes {bad.tolist()}")


def to_polar(xyz) -> np.ndarray:
    """Map cartesian (x, y, z) to (d, theta, z) with theta in [0, 2*pi).

    Works on a single point or any (..., 3) array. The origin maps to
    theta = 0 by convention.
    """
    a = np.asarray(xyz, dtype=np.float64)
    x, y, z = a[..., 0], a[..., 1], a[..., 2]
    d = np.hypot(x, y)
    theta = np.mod(np.arctan2(y, x), TWO_PI)
    # fmod of a tiny negative angle can round up to exactly 2*pi
    theta = np.where(theta >= TWO_PI, 0.0, theta)
    return np.stack([d, theta, z], axis=-1)


def from_polar(dtz) -> np.ndarray:
    """Inverse of :func:`to_polar`."""
    a = np.asarray(dtz, dtype=np.float64)
    d, theta, z = a[..., 0], a[..., 1], a[..., 2]
    return np.stack([d * np.cos(theta), d * np.sin(theta), z], axis=-1)


def _scaled_axes(xyz: np.ndarray, cfg: PolarGridConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-point fractional position along each grid axis, in units of 1."""
    if cfg.mode == "cartesian":
        u = (xyz[..., 0] - cfg.d_min) / (cfg.d_max - cfg.d_min)
        v = (xyz[..., 1] - cfg.y_min) / (cfg.y_max - cfg.y_min)
    else:
        pol = to_polar(xyz)
        u = (pol[..., 0] - cfg.d_min) / (cfg.d_max - cfg.d_min)
        v = pol[..., 1] / TWO_PI
    w = (xyz[..., 2] - cfg.z_min) / (cfg.z_max - cfg.z_min)
    return u, v, w


def cells_of(points, cfg: PolarGridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Assign every point to a grid cell.

    Args:
        points: PointCloud or (N, >=3) array of cartesian coordinates.
        cfg: grid configuration.

    Returns:
        (ijk, in_range): (N, 3) int32 bin indices and an (N,) bool mask.
        Under oob_policy "drop" the mask marks points inside the configured
        ranges; indices of out-of-range points are still clamped into the
        grid but must only be used where the mask holds. Under "clamp" the
        mask is all True.
    """
    xyz = points.xyz if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)[..., :3]
    u, v, w = _scaled_axes(xyz, cfg)
    if cfg.oob_policy == "clamp":
        in_range = np.ones(len(xyz), dtype=bool)
    else:
        in_range = (u >= 0.0) & (u <= 1.0) & (w >= 0.0) & (w <= 1.0)
        if cfg.mode == "cartesian":
            in_range &= (v >= 0.0) & (v <= 1.0)
    i = np.clip(np.floor(u * cfg.H), 0, cfg.H - 1).astype(np.int32)
    j = np.clip(np.floor(v * cfg.W), 0, cfg.W - 1).astype(np.int32)
    k = np.clip(np.floor(w * cfg.Z), 0, cfg.Z - 1).astype(np.int32)
    return np.stack([i, j, k], axis=-1), in_range


def cell_of(p, cfg: PolarGridConfig) -> CellIndex | None:
    """Grid cell of a single point, or None when it is out of range."""
    ijk, ok = cells_of(np.asarray(p, dtype=np.float64).reshape(1, -1), cfg)
    if not ok[0]:
        return None
    return CellIndex(int(ijk[0, 0]), int(ijk[0, 1]), int(ijk[0, 2]))


def bev_coords(points, cfg: PolarGridConfig) -> np.ndarray:
    """Continuous (fractional) BEV coordinates (i, j) per point, float64.

    The cell with index (i, j) spans [i, i+1) x [j, j+1), so a point in the
    middle of that cell sits at (i + 0.5, j + 0.5).
    """
    xyz = points.xyz if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)[..., :3]
    u, v, _ = _scaled_axes(xyz, cfg)
    return np.stack([u * cfg.H, v * cfg.W], axis=-1)
