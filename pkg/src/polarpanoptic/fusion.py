"""Panoptic fusion: merge semantic voxel predictions with center/offset maps.

The stages compose as
``nms_topk -> foreground_mask -> group_by_center -> vote_labels ->
lift_to_points``; :func:`fuse` runs the whole chain. Instances are produced
by grouping foreground BEV pixels to their offset-shifted nearest center,
so no bounding boxes or per-class detectors are involved, and semantic
predictions are never overwritten: a point whose voxel class disagrees with
its group's voted class keeps the semantic label and simply carries no
instance id.

Everything is deterministic: ties in NMS break toward the lexicographically
smallest cell, ties in grouping toward the higher-scoring center, ties in
voting toward the lower class id.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .grid import CellIndex, PointCloud, PolarGridConfig
from .voxelizer import GroupedCloud, group


@dataclass(frozen=True)
class FusionParams:
    """Center selection knobs: NMS window, score cutoff, max center count."""

    nms_kernel: int = 5
    nms_threshold: float = 0.1
    top_k: int = 100

    def __post_init__(self):
        if self.nms_kernel < 1 or self.nms_kernel % 2 == 0:
            raise ValueError(f"nms_kernel must be odd and >= 1, got {self.nms_kernel}")
        if not 0.0 <= self.nms_threshold <= 1.0:
            raise ValueError(f"nms_threshold must be in [0, 1], got {self.nms_threshold}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True, eq=False)
class PanopticLabeling:
    """Final artifact: a semantic class and an instance id per point.

    Instance id 0 means "no instance" (stuff, ignored, or demoted points).
    """

    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        sem = np.array(self.semantic, dtype=np.int32, copy=True)
        inst = np.array(self.instance, dtype=np.int32, copy=True)
        if sem.shape != inst.shape or sem.ndim != 1:
            raise ValueError(f"semantic/instance must be equal-length 1-D arrays, got {sem.shape} vs {inst.shape}")
        if inst.min(initial=0) < 0:
            raise ValueError("instance ids must be nonnegative")
        sem.setflags(write=False)
        inst.setflags(write=False)
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    def __len__(self) -> int:
        return len(self.semantic)


def _class_lut(class_ids, size: int) -> np.ndarray:
    lut = np.zeros(size, dtype=bool)
    for c in class_ids:
        if c < size:
            lut[c] = True
    return lut


def nms_topk(heatmap: np.ndarray, params: FusionParams) -> list[tuple[CellIndex, float]]:
    """Select instance centers: windowed local maxima above the threshold.

    A cell survives when it holds the maximum of its nms_kernel window and
    is the lexicographically smallest cell among the window's equal maxima.
    At most ``top_k`` survivors are returned, sorted by descending score
    (score ties in lexicographic cell order).
    """
    h = np.asarray(heatmap)
    if h.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {h.shape}")
    win = maximum_filter(h, size=params.nms_kernel, mode="constant", cval=-np.inf)
    cand = np.argwhere((h == win) & (h >= params.nms_threshold))
    r = params.nms_kernel // 2
    rows, cols, scores = [], [], []
    for i, j in cand:
        i0, j0 = max(0, i - r), max(0, j - r)
        eq = np.argwhere(h[i0:i + r + 1, j0:j + r + 1] == h[i, j])
        if eq[0, 0] + i0 == i and eq[0, 1] + j0 == j:
            rows.append(i)
            cols.append(j)
            scores.append(h[i, j])
    if not rows:
        return []
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((rows * h.shape[1] + cols, -scores))[: params.top_k]
    return [(CellIndex(int(rows[o]), int(cols[o])), float(scores[o])) for o in order]


def foreground_mask(semantic_labels: np.ndarray, cfg: PolarGridConfig) -> np.ndarray:
    """Pixels where at least one voxel in the column carries a thing class.

    Args:
        semantic_labels: (H, W, Z) integer class ids per voxel.

    Returns:
        (H, W) bool.
    """
    labels = np.asarray(semantic_labels)
    if labels.ndim != 3:
        raise ValueError(f"semantic labels must be 3-D, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError(f"semantic labels must be integers, got dtype {labels.dtype}")
    size = max(int(labels.max(initial=0)) + 1, cfg.num_label_values)
    lut = _class_lut(cfg.thing_classes, size)
    return lut[labels].any(axis=2)


def group_by_center(
    foreground: np.ndarray,
    offsets: np.ndarray,
    centers: list[CellIndex],
) -> np.ndarray:
    """Assign each foreground pixel to the offset-nearest center.

    The assigned value is the 1-based index of the minimizing center in
    ``centers``; distance ties resolve to the earlier (higher-scoring)
    entry. Background pixels get 0. When centers is empty but foreground
    pixels exist, a warning is emitted and all pixels stay ungrouped.

    Returns:
        (H, W) int32 group ids.
    """
    fg = np.asarray(foreground, dtype=bool)
    off = np.asarray(offsets)
    if off.shape != (*fg.shape, 2):
        raise ValueError(f"offsets must have shape {(*fg.shape, 2)}, got {off.shape}")
    out = np.zeros(fg.shape, dtype=np.int32)
    pix = np.argwhere(fg)
    if len(pix) == 0:
        return out
    if not centers:
        warnings.warn("foreground pixels present but no centers selected; leaving them ungrouped")
        return out
    carr = np.asarray([(c.i, c.j) for c in centers], dtype=np.float64)
    q = pix.astype(np.float64) + off[fg].astype(np.float64)
    best = np.empty(len(pix), dtype=np.int64)
    step = 65536
    for lo in range(0, len(pix), step):
        hi = min(lo + step, len(pix))
        d2 = (q[lo:hi, 0, None] - carr[None, :, 0]) ** 2
        d2 += (q[lo:hi, 1, None] - carr[None, :, 1]) ** 2
        best[lo:hi] = d2.argmin(axis=1)
    out[fg] = (best + 1).astype(np.int32)
    return out


def vote_labels(groups: np.ndarray, semantic, cfg: PolarGridConfig) -> dict[int, int]:
    """Vote one thing class per group from semantic probabilities.

    Each group's class is the argmax over thing classes of the summed
    per-voxel probability mass of its member pixels (class-id ties go
    lower). ``semantic`` may be (H, W, Z, C) or (H, W, C) probabilities, or
    (H, W, Z) integer labels, which count as one-hot probabilities. Groups
    whose total mass is zero fall back to counting member-voxel argmax
    classes and are reported via a warning.

    Returns:
        mapping group id -> class id for every group with member pixels.
    """
    g = np.asarray(groups)
    sel = g > 0
    present = np.unique(g[sel])
    if len(present) == 0:
        return {}
    n_groups = int(g.max())
    thing_ids = np.asarray(sorted(cfg.thing_classes), dtype=np.int64)
    if len(thing_ids) == 0:
        raise ValueError("config has no thing classes to vote over")
    sem = np.asarray(semantic)
    if sem.ndim == 3 and np.issubdtype(sem.dtype, np.integer):
        if sem.shape[:2] != g.shape:
            raise ValueError(f"shape mismatch: groups {g.shape} vs labels {sem.shape}")
        span = max(int(sem.max(initial=0)) + 1, int(thing_ids.max()) + 1)
        keys = (g[sel].astype(np.int64)[:, None] * span + sem[sel]).ravel()
        acc = np.bincount(keys, minlength=(n_groups + 1) * span).astype(np.float64)
        acc = acc.reshape(n_groups + 1, span)
    elif sem.ndim in (3, 4) and np.issubdtype(sem.dtype, np.floating):
        pix = sem.sum(axis=2) if sem.ndim == 4 else sem
        if pix.shape[:2] != g.shape:
            raise ValueError(f"shape mismatch: groups {g.shape} vs probabilities {sem.shape}")
        span = max(pix.shape[-1], int(thing_ids.max()) + 1)
        acc = np.zeros((n_groups + 1, span), dtype=np.float64)
        gsel = g[sel].astype(np.int64)
        psel = pix[sel]
        for c in range(pix.shape[-1]):
            acc[:, c] = np.bincount(gsel, weights=psel[:, c], minlength=n_groups + 1)
    else:
        raise ValueError(f"semantic must be float probabilities or integer labels, got ndim={sem.ndim} dtype={sem.dtype}")
    sub = acc[:, thing_ids]
    winners = thing_ids[np.argmax(sub, axis=1)]
    voted = {}
    fallback = []
    for gid in present:
        gid = int(gid)
        if sub[gid].sum() > 0:
            voted[gid] = int(winners[gid])
        else:
            fallback.append(gid)
    if fallback:
        warnings.warn(f"groups {fallback} have zero total class probability; falling back to argmax counts")
        for gid in fallback:
            voted[gid] = _argmax_count_class(g == gid, sem, thing_ids)
    return voted


def _argmax_count_class(member_mask: np.ndarray, sem: np.ndarray, thing_ids: np.ndarray) -> int:
    """Modal per-voxel argmax class of a group; zero-mass voting fallback."""
    if sem.ndim == 4:
        votes = sem[member_mask].reshape(-1, sem.shape[-1]).argmax(axis=1)
    elif np.issubdtype(sem.dtype, np.floating):
        votes = sem[member_mask].argmax(axis=1)
    else:
        votes = sem[member_mask].ravel()
    counts = np.bincount(votes, minlength=int(thing_ids.max()) + 1)
    return int(counts.argmax())


def lift_to_points(
    groups: np.ndarray,
    voted_classes: dict[int, int],
    semantic_labels: np.ndarray,
    points: PointCloud,
    grouped: GroupedCloud,
    cfg: PolarGridConfig,
) -> PanopticLabeling:
    """Project voxel classes and group ids back onto the point cloud.

    Every point takes the class of its voxel. A point additionally receives
    its pixel's group id as instance id when that voxel class is a thing
    class equal to the group's voted class. Out-of-range points get the
    ignore class and no instance.
    """
    if grouped.cfg != cfg:
        raise ValueError("grouping was computed under a different grid config")
    labels = np.asarray(semantic_labels)
    expect = (cfg.H, cfg.W, cfg.Z)
    if labels.shape != expect:
        raise ValueError(f"shape mismatch: semantic labels {labels.shape} vs grid {expect}")
    g = np.asarray(groups)
    if g.shape != (cfg.H, cfg.W):
        raise ValueError(f"shape mismatch: groups {g.shape} vs grid {(cfg.H, cfg.W)}")
    sem_out = np.full(grouped.n_points, cfg.ignore_class, dtype=np.int32)
    inst_out = np.zeros(grouped.n_points, dtype=np.int32)
    if grouped.n_in_range:
        idx = grouped.order
        ijk = grouped.ijk
        vox = labels[ijk[:, 0], ijk[:, 1], ijk[:, 2]].astype(np.int64)
        sem_out[idx] = vox
        pix_group = g[ijk[:, 0], ijk[:, 1]].astype(np.int64)
        n_ids = max(int(g.max(initial=0)), max(voted_classes, default=0)) + 1
        varr = np.full(n_ids, -1, dtype=np.int64)
        for gid, cls in voted_classes.items():
            varr[gid] = cls
        size = max(int(vox.max(initial=0)) + 1, cfg.num_label_values)
        thing = _class_lut(cfg.thing_classes, size)
        ok = (pix_group > 0) & thing[vox] & (varr[pix_group] == vox)
        inst_out[idx[ok]] = pix_group[ok]
    return PanopticLabeling(sem_out, inst_out)


def fuse(
    semantic,
    heatmap,
    offsets,
    points: PointCloud,
    cfg: PolarGridConfig,
    params: FusionParams | None = None,
) -> PanopticLabeling:
    """Full panoptic fusion of semantic, heatmap, and offset predictions.

    Args:
        semantic: (H, W, Z) integer voxel labels or (H, W, Z, C) float
            voxel class probabilities.
        heatmap: (H, W) center heatmap.
        offsets: (H, W, 2) pixel-to-center offsets in grid cells.
        points: the cloud to label.
        cfg: grid configuration the tensors were produced under.
        params: center selection parameters (defaults when None).

    Returns:
        PanopticLabeling over all points, in input order.
    """
    if params is None:
        params = FusionParams()
    sem = np.asarray(semantic)
    h = np.asarray(heatmap)
    off = np.asarray(offsets)
    if sem.ndim == 4 and np.issubdtype(sem.dtype, np.floating):
        labels = sem.argmax(axis=-1).astype(np.int32)
    elif sem.ndim == 3 and np.issubdtype(sem.dtype, np.integer):
        labels = sem
    else:
        raise ValueError(
            f"semantic must be (H, W, Z) integer labels or (H, W, Z, C) float probabilities, got ndim={sem.ndim} dtype={sem.dtype}"
        )
    expect = (cfg.H, cfg.W, cfg.Z)
    if labels.shape != expect:
        raise ValueError(f"shape mismatch: semantic {labels.shape} vs grid {expect}")
    if h.shape != (cfg.H, cfg.W):
        raise ValueError(f"shape mismatch: heatmap {h.shape} vs grid {(cfg.H, cfg.W)}")
    if off.shape != (cfg.H, cfg.W, 2):
        raise ValueError(f"shape mismatch: offsets {off.shape} vs grid {(cfg.H, cfg.W, 2)}")
    grouped = group(points, cfg)
    centers = [c for c, _ in nms_topk(h, params)]
    fg = foreground_mask(labels, cfg)
    groups = group_by_center(fg, off, centers)
    voted = vote_labels(groups, sem, cfg) if groups.any() else {}
    return lift_to_points(groups, voted, labels, points, grouped, cfg)
