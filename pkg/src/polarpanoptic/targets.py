"""Instance-level training/evaluation targets on the BEV grid.

From an instance-labeled cloud this module derives per-instance mass
centers, the max-of-Gaussians center heatmap, and the dense center-offset
field consumed by the fusion stage. Pixels are addressed as integer lattice
points p = (i, j); centers are continuous (fractional) grid coordinates.

Centers are quantized to multiples of 2**-20 of a cell (~1e-7 of a bin,
far below any physical meaning). With integer pixels below 2**10 this makes
``c - p`` exactly representable in float64, so ``p + offset(p)`` reproduces
the center bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PointCloud, PolarGridConfig, bev_coords, cells_of

_CENTER_SNAP = 2.0 ** 20


@dataclass(frozen=True)
class InstanceSummary:
    """One thing-class instance reduced to its BEV footprint statistics."""

    instance_id: int
    class_id: int
    center: tuple[float, float]  # fractional (i, j)
    point_count: int
    wraps_seam: bool = False


def _snap(value: float) -> float:
    return math.floor(value * _CENTER_SNAP + 0.5) / _CENTER_SNAP


def instance_summaries(points: PointCloud, cfg: PolarGridConfig) -> list[InstanceSummary]:
    """Mass center, class, and size of every instance with in-range points.

    The radial coordinate is the arithmetic mean of the members' fractional
    bin positions; the angular coordinate is their circular mean, so
    instances straddling the 0/2*pi seam get a sensible center. Instances
    whose points all fall out of grid range are dropped. Results are sorted
    by instance id.
    """
    if points.instance is None:
        raise ValueError("instance_summaries needs a cloud with instance labels")
    if points.semantic is None:
        raise ValueError("instance_summaries needs a cloud with semantic labels")
    _, in_range = cells_of(points, cfg)
    active = in_range & (points.instance > 0)
    if not active.any():
        return []
    coords = bev_coords(points, cfg)
    ids = points.instance[active]
    sems = points.semantic[active].astype(np.int64)
    ci = coords[active, 0]
    cj = coords[active, 1]
    out = []
    for inst in np.unique(ids):
        m = ids == inst
        count = int(m.sum())
        sem_counts = np.bincount(sems[m])
        class_id = int(sem_counts.argmax())
        mean_i = float(ci[m].mean())
        wraps = False
        if cfg.mode == "polar":
            jm = cj[m]
            # an instance narrower than half the circle that still spans more
            # than half the j range must straddle the seam: unwrap before
            # averaging so the center lands inside the instance
            wraps = float(jm.max() - jm.min()) > cfg.W / 2.0
            if wraps:
                jm = np.where(jm > cfg.W / 2.0, jm - cfg.W, jm)
            mean_j = float(jm.mean()) % cfg.W
        else:
            mean_j = float(cj[m].mean())
        out.append(
            InstanceSummary(
                instance_id=int(inst),
                class_id=class_id,
                center=(_snap(mean_i), _snap(mean_j)),
                point_count=count,
                wraps_seam=wraps,
            )
        )
    return out


def pixel_instance_map(points: PointCloud, cfg: PolarGridConfig) -> np.ndarray:
    """Owner instance per BEV pixel: the id contributing the most points.

    Ties go to the lower instance id. Pixels without instance points are 0.

    Returns:
        (H, W) int32 instance ids.
    """
    if points.instance is None:
        raise ValueError("pixel_instance_map needs a cloud with instance labels")
    ijk, in_range = cells_of(points, cfg)
    active = in_range & (points.instance > 0)
    out = np.zeros((cfg.H, cfg.W), dtype=np.int32)
    if not active.any():
        return out
    flat = ijk[active, 0].astype(np.int64) * cfg.W + ijk[active, 1]
    ids = points.instance[active].astype(np.int64)
    span = int(ids.max()) + 1
    combo = flat * span + ids
    pairs, counts = np.unique(combo, return_counts=True)
    pk = pairs // span
    pv = pairs % span
    sel = np.lexsort((pv, -counts, pk))
    uk, first = np.unique(pk[sel], return_index=True)
    out.reshape(-1)[uk] = pv[sel][first].astype(np.int32)
    return out


def gaussian_heatmap(
    summaries: list[InstanceSummary],
    sigma: float,
    cfg: PolarGridConfig,
) -> np.ndarray:
    """Max-of-Gaussians center heatmap, truncated to +-3 sigma per axis.

    Every pixel holds max_i exp(-|p - c_i|^2 / (2 sigma^2)) over the
    instances whose truncation window covers it; everything else is exactly
    0. With ``cfg.mirror_wrap_centers`` set, instances flagged as crossing
    the angular seam are additionally painted at c_j +- W so both sides of
    the seam receive support.

    Returns:
        (H, W) float64 in [0, 1].
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    out = np.zeros((cfg.H, cfg.W), dtype=np.float64)
    reach = 3.0 * sigma
    inv = 1.0 / (2.0 * sigma * sigma)
    for s in summaries:
        ci, cj = s.center
        shifts = (0.0,)
        if cfg.mirror_wrap_centers and s.wraps_seam and cfg.mode == "polar":
            shifts = (0.0, -float(cfg.W), float(cfg.W))
        for shift in shifts:
            cjs = cj + shift
            i0 = max(0, int(math.ceil(ci - reach)))
            i1 = min(cfg.H - 1, int(math.floor(ci + reach)))
            j0 = max(0, int(math.ceil(cjs - reach)))
            j1 = min(cfg.W - 1, int(math.floor(cjs + reach)))
            if i0 > i1 or j0 > j1:
                continue
            di = np.arange(i0, i1 + 1, dtype=np.float64) - ci
            dj = np.arange(j0, j1 + 1, dtype=np.float64) - cjs
            patch = np.exp(-(di[:, None] ** 2 + dj[None, :] ** 2) * inv)
            np.maximum(out[i0:i1 + 1, j0:j1 + 1], patch, out=out[i0:i1 + 1, j0:j1 + 1])
    return out


def offset_field(
    points: PointCloud,
    summaries: list[InstanceSummary],
    cfg: PolarGridConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Dense pixel-to-center offsets for the instances owning each pixel.

    A pixel belongs to the instance contributing the most points to its BEV
    cell (see :func:`pixel_instance_map`). For an owned pixel p the stored
    vector is c - p, so p + offset(p) equals the owner's center exactly.

    Returns:
        (offsets, mask): (H, W, 2) float64 and (H, W) bool foreground mask.
        Offsets outside the mask are 0.
    """
    pixmap = pixel_instance_map(points, cfg)
    mask = pixmap > 0
    offsets = np.zeros((cfg.H, cfg.W, 2), dtype=np.float64)
    if not mask.any() or not summaries:
        return offsets, mask
    ids = np.array([s.instance_id for s in summaries], dtype=np.int64)
    centers = np.array([s.center for s in summaries], dtype=np.float64)
    order = np.argsort(ids)
    ids = ids[order]
    centers = centers[order]
    fg = np.argwhere(mask)
    owners = pixmap[mask]
    pos = np.searchsorted(ids, owners)
    pos = np.minimum(pos, len(ids) - 1)
    if not (ids[pos] == owners).all():
        missing = np.setdiff1d(owners, ids)
        raise ValueError(f"summaries missing for instance ids {missing.tolist()}")
    offsets[mask] = centers[pos] - fg.astype(np.float64)
    return offsets, mask
