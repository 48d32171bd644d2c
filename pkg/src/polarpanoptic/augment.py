"""Projection-preserving instance augmentation and scene-level augmentation.

Instance moves are restricted to transforms that keep every point's range
to the sensor unchanged (rotation about the sensor's vertical axis,
reflection across a vertical plane through the sensor), so the sampling
pattern a real scanner would have produced stays plausible. Local jitter
adds small rigid measurement noise per instance. Scene augmentation
reflects and rotates whole clouds.

All randomness flows through an explicit numpy Generator, so a fixed seed
reproduces output byte for byte; scans can be processed in parallel with
independent generators.

Order of operations in :func:`augment_scan`: paste instances from the bank,
then apply global and local augmentation to every instance in the scan.
Whether pasted instances contribute to the visibility feature is decided by
what you feed the voxelizer: compute visibility on the augmented cloud
(default pipeline order) to let pasted geometry occlude, or on the original
cloud to ignore it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .formats import atomic_write_bytes, read_points, write_points
from .grid import PointCloud, PolarGridConfig

_MANIFEST = "manifest.json"


@dataclass(frozen=True)
class AugmentParams:
    """Knobs for oversampling, per-instance moves, and scene transforms.

    ``local_translation_std`` is a standard deviation in meters (0.5 m, i.e.
    variance 0.25). ``local_rotation_range`` bounds the uniform jitter angle
    to +-20 degrees by default; small angles model measurement noise.
    """

    paste_count: int = 5
    p_rotation: float = 0.2
    p_reflection: float = 0.2
    local_translation_std: float = 0.5
    local_rotation_range: float = math.pi / 9.0
    p_flip_x: float = 0.5
    p_flip_y: float = 0.5
    p_flip_diagonal: float = 0.5
    scene_rotation: bool = True
    seed: int | None = None

    def __post_init__(self):
        for name in ("p_rotation", "p_reflection", "p_flip_x", "p_flip_y", "p_flip_diagonal"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.paste_count < 0:
            raise ValueError(f"paste_count must be >= 0, got {self.paste_count}")
        if self.local_translation_std < 0:
            raise ValueError("local_translation_std must be >= 0")
        if self.local_rotation_range < 0:
            raise ValueError("local_rotation_range must be >= 0")


@dataclass(frozen=True, eq=False)
class BankEntry:
    class_id: int
    points: np.ndarray  # (P, 4) sensor-frame x, y, z, reflectance
    source_scan: str = ""


@dataclass(frozen=True, eq=False)
class InstanceBank:
    """Store of extracted thing-class instances with class sampling weights.

    A class is drawn with probability proportional to the reciprocal of its
    share of banked points, so rare classes are pasted more often. Weights
    are normalized over the classes actually present.
    """

    entries: tuple[BankEntry, ...]

    def __post_init__(self):
        totals: dict[int, int] = {}
        by_class: dict[int, list[int]] = {}
        for n, e in enumerate(self.entries):
            if len(e.points) < 1:
                raise ValueError("bank entries must contain at least one point")
            totals[e.class_id] = totals.get(e.class_id, 0) + len(e.points)
            by_class.setdefault(e.class_id, []).append(n)
        classes = tuple(sorted(totals))
        if classes:
            inv = np.array([1.0 / totals[c] for c in classes], dtype=np.float64)
            weights = tuple((inv / inv.sum()).tolist())
        else:
            weights = ()
        object.__setattr__(self, "_classes", classes)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_by_class", {c: tuple(v) for c, v in by_class.items()})
        object.__setattr__(self, "_totals", totals)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def classes(self) -> tuple[int, ...]:
        return self._classes

    @property
    def class_weights(self) -> tuple[float, ...]:
        return self._weights

    @property
    def class_point_totals(self) -> dict[int, int]:
        return dict(self._totals)

    def entries_of(self, class_id: int) -> tuple[int, ...]:
        return self._by_class.get(class_id, ())


def build_bank(
    scans,
    cfg: PolarGridConfig,
    source_ids=None,
) -> InstanceBank:
    """Extract every ground-truth instance of sufficient size from scans."""
    entries: list[BankEntry] = []
    source_ids = list(source_ids) if source_ids is not None else [str(n) for n in range(len(scans))]
    for scan, src in zip(scans, source_ids):
        if scan.semantic is None or scan.instance is None:
            raise ValueError("bank scans need semantic and instance labels")
        for inst in np.unique(scan.instance):
            if inst <= 0:
                continue
            mask = scan.instance == inst
            if int(mask.sum()) < cfg.min_instance_points:
                continue
            class_id = int(np.bincount(scan.semantic[mask]).argmax())
            if class_id not in cfg.thing_classes:
                continue
            entries.append(BankEntry(class_id=class_id, points=scan.points[mask].copy(), source_scan=src))
    return InstanceBank(tuple(entries))


def save_bank(directory: str | os.PathLike, bank: InstanceBank) -> None:
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    manifest = {"version": 1, "entries": []}
    for n, e in enumerate(bank.entries):
        name = f"entry_{n:05d}.bin"
        write_points(os.path.join(directory, name), e.points)
        manifest["entries"].append(
            {"file": name, "class_id": e.class_id, "point_count": len(e.points), "source_scan": e.source_scan}
        )
    atomic_write_bytes(os.path.join(directory, _MANIFEST), json.dumps(manifest, indent=1).encode())


def load_bank(directory: str | os.PathLike) -> InstanceBank:
    directory = os.fspath(directory)
    with open(os.path.join(directory, _MANIFEST), "rb") as f:
        manifest = json.loads(f.read())
    entries = []
    for rec in manifest["entries"]:
        pts = read_points(os.path.join(directory, rec["file"]))
        entries.append(BankEntry(class_id=int(rec["class_id"]), points=pts, source_scan=rec.get("source_scan", "")))
    return InstanceBank(tuple(entries))


def oversample(
    scan: PointCloud,
    bank: InstanceBank,
    params: AugmentParams,
    rng: np.random.Generator,
) -> PointCloud:
    """Paste instances drawn from the bank into the scan, verbatim.

    Classes are drawn by bank weight (with replacement), entries uniformly
    within the class. Pasted points keep their source coordinates and
    reflectance and receive fresh instance ids above the scan's maximum.
    No collision check is performed.
    """
    if params.paste_count == 0:
        return scan
    if scan.semantic is None or scan.instance is None:
        raise ValueError("oversample needs a scan with semantic and instance labels")
    if len(bank) == 0:
        raise ValueError("cannot oversample from an empty bank")
    classes = np.asarray(bank.classes)
    weights = np.asarray(bank.class_weights)
    next_id = int(scan.instance.max(initial=0)) + 1
    parts = [scan.points]
    sems = [scan.semantic]
    insts = [scan.instance]
    for n in range(params.paste_count):
        cls = int(rng.choice(classes, p=weights))
        options = bank.entries_of(cls)
        entry = bank.entries[options[int(rng.integers(len(options)))]]
        parts.append(entry.points)
        sems.append(np.full(len(entry.points), entry.class_id, dtype=np.int32))
        insts.append(np.full(len(entry.points), next_id + n, dtype=np.int32))
    return PointCloud(np.concatenate(parts), np.concatenate(sems), np.concatenate(insts))


def _rotate_xy(xy: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return xy @ rot.T


def global_augment(points: np.ndarray, params: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    """Move one instance without changing any point's range to the sensor.

    With probability ``p_rotation`` rotate about the sensor's vertical axis
    by a uniform angle; independently, with probability ``p_reflection``
    reflect across a uniformly random vertical plane through the sensor.
    """
    pts = np.array(points, dtype=np.float64, copy=True)
    if rng.random() < params.p_rotation:
        pts[:, :2] = _rotate_xy(pts[:, :2], float(rng.uniform(0.0, 2.0 * math.pi)))
    if rng.random() < params.p_reflection:
        phi = float(rng.uniform(0.0, math.pi))
        c2, s2 = math.cos(2.0 * phi), math.sin(2.0 * phi)
        mirror = np.array([[c2, s2], [s2, -c2]], dtype=np.float64)
        pts[:, :2] = pts[:, :2] @ mirror.T
    return pts


def local_augment(points: np.ndarray, params: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    """Rigid measurement-noise jitter: one shared translation and rotation.

    The translation is drawn per instance from N(0, std^2) per axis; the
    rotation about the instance mass center's vertical axis from
    U(-range, +range).
    """
    pts = np.array(points, dtype=np.float64, copy=True)
    shift = rng.normal(0.0, params.local_translation_std, size=3)
    angle = float(rng.uniform(-params.local_rotation_range, params.local_rotation_range))
    center = pts[:, :2].mean(axis=0)
    pts[:, :2] = _rotate_xy(pts[:, :2] - center, angle) + center
    pts[:, :3] += shift
    return pts


def scene_augment(scan: PointCloud, params: AugmentParams, rng: np.random.Generator) -> PointCloud:
    """Whole-cloud reflections along x, y, and the x+y diagonal, plus a
    uniform rotation about the vertical axis. Labels ride along unchanged."""
    pts = np.array(scan.points, dtype=np.float64, copy=True)
    if rng.random() < params.p_flip_x:
        pts[:, 1] = -pts[:, 1]
    if rng.random() < params.p_flip_y:
        pts[:, 0] = -pts[:, 0]
    if rng.random() < params.p_flip_diagonal:
        pts[:, [0, 1]] = pts[:, [1, 0]]
    if params.scene_rotation:
        pts[:, :2] = _rotate_xy(pts[:, :2], float(rng.uniform(0.0, 2.0 * math.pi)))
    return PointCloud(pts, scan.semantic, scan.instance)


def augment_instances(scan: PointCloud, params: AugmentParams, rng: np.random.Generator) -> PointCloud:
    """Apply global then local augmentation to every instance in the scan."""
    if scan.instance is None:
        raise ValueError("augment_instances needs instance labels")
    pts = np.array(scan.points, dtype=np.float64, copy=True)
    for inst in np.unique(scan.instance):
        if inst <= 0:
            continue
        mask = scan.instance == inst
        moved = global_augment(pts[mask], params, rng)
        pts[mask] = local_augment(moved, params, rng)
    return PointCloud(pts, scan.semantic, scan.instance)


def augment_scan(
    scan: PointCloud,
    bank: InstanceBank | None,
    params: AugmentParams,
    rng: np.random.Generator,
    scene: bool = True,
) -> PointCloud:
    """Full augmentation chain: oversample, per-instance moves, scene moves."""
    out = scan
    if bank is not None and params.paste_count > 0:
        out = oversample(out, bank, params, rng)
    out = augment_instances(out, params, rng)
    if scene:
        out = scene_augment(out, params, rng)
    return out


def prune_by_importance(scan: PointCloud, importance: np.ndarray, fraction: float) -> PointCloud:
    """Drop the most influential points given externally computed scores.

    Hook for gradient-based pruning schemes: scores come from outside (this
    library has no network), and the top ``fraction`` of points by score is
    removed. Ties resolve toward keeping later indices.
    """
    scores = np.asarray(importance, dtype=np.float64)
    if scores.shape != (len(scan),):
        raise ValueError(f"importance must have shape ({len(scan)},), got {scores.shape}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n_drop = int(len(scan) * fraction)
    if n_drop == 0:
        return scan
    drop = np.argsort(-scores, kind="stable")[:n_drop]
    keep = np.setdiff1d(np.arange(len(scan)), drop)
    return PointCloud(
        scan.points[keep],
        scan.semantic[keep] if scan.semantic is not None else None,
        scan.instance[keep] if scan.instance is not None else None,
    )
