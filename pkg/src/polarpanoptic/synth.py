"""Synthetic scenes with exact ground-truth tensors.

The generator plants disk-shaped thing instances over a ground plane,
keeping instances in separate height bins from the ground and (unless
overlap is requested) far enough apart that no BEV cell mixes two
instances. The emitted semantic/heatmap/offset tensors are computed by the
regular voxelizer and target code from the generated cloud, so a fusion run
on the noiseless tensors must reproduce the ground truth up to quantization
effects. Coordinates are drawn in float32 so that writing and re-reading
scan files cannot move a point across a bin boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PointCloud, PolarGridConfig
from .targets import InstanceSummary, gaussian_heatmap, instance_summaries, offset_field
from .voxelizer import voxel_labels

def _cell_clearance(cfg: PolarGridConfig) -> float:
    """Metric gap guaranteeing two disks cannot both reach into one cell.

    The widest cell sits at d_max, where an angular bin spans
    d_max * 2*pi / W meters of arc; anything beyond that diagonal plus a
    small margin keeps footprints cell-disjoint.
    """
    radial = (cfg.d_max - cfg.d_min) / cfg.H
    arc = cfg.d_max * 2.0 * math.pi / cfg.W
    return math.hypot(radial, arc) + 0.1


@dataclass(frozen=True)
class SynthSpec:
    """Scene recipe; every quantity is drawn from the seeded generator.

    ``overlap_pairs`` adds, for that many instances, a same-class partner
    displaced radially by ``overlap_factor`` times the sum of the two
    footprint radii, so the footprints share BEV cells while the centers
    stay NMS-separable (this needs a radially fine grid; the generator
    refuses when the resulting center distance drops below the separation
    floor). ``noise_std`` > 0 additionally emits perturbed copies of the
    tensors to emulate imperfect prediction heads.
    """

    seed: int = 0
    instance_range: tuple[int, int] = (4, 8)
    points_per_instance: tuple[int, int] = (80, 200)
    footprint_radius: tuple[float, float] = (0.8, 2.0)
    placement_annulus: tuple[float, float] | None = None
    instance_z_band: tuple[float, float] | None = None
    stuff_points: int = 12000
    stuff_classes_used: tuple[int, ...] | None = None
    min_center_separation_cells: float = 12.0
    overlap_pairs: int = 0
    overlap_factor: float = 0.92
    overlap_radius: float = 0.9
    noise_std: float = 0.0
    max_place_tries: int = 300

    def __post_init__(self):
        if self.instance_range[0] < 0 or self.instance_range[0] > self.instance_range[1]:
            raise ValueError(f"bad instance_range {self.instance_range}")
        if self.points_per_instance[0] < 1 or self.points_per_instance[0] > self.points_per_instance[1]:
            raise ValueError(f"bad points_per_instance {self.points_per_instance}")
        if self.footprint_radius[0] <= 0 or self.footprint_radius[0] > self.footprint_radius[1]:
            raise ValueError(f"bad footprint_radius {self.footprint_radius}")
        if self.stuff_points < 0 or self.overlap_pairs < 0 or self.noise_std < 0:
            raise ValueError("stuff_points, overlap_pairs, and noise_std must be >= 0")


@dataclass(frozen=True, eq=False)
class SynthScene:
    """A generated cloud plus the exact target tensors derived from it."""

    cloud: PointCloud
    semantic_voxels: np.ndarray
    heatmap: np.ndarray
    offsets: np.ndarray
    foreground: np.ndarray
    summaries: list[InstanceSummary]
    semantic_noisy: np.ndarray | None = None
    heatmap_noisy: np.ndarray | None = None
    offsets_noisy: np.ndarray | None = None


@dataclass(frozen=True)
class _Placement:
    d: float
    theta: float
    radius: float
    class_id: int


def _cell_distance(a: tuple[float, float], b: tuple[float, float], cfg: PolarGridConfig) -> float:
    di = a[0] - b[0]
    dj = abs(a[1] - b[1])
    dj = min(dj, cfg.W - dj)  # physical proximity wraps at the seam
    return math.hypot(di, dj)


def _metric_xy(p: _Placement) -> tuple[float, float]:
    return p.d * math.cos(p.theta), p.d * math.sin(p.theta)


def _separated(cand: _Placement, placed: list[_Placement], cfg: PolarGridConfig, min_cells: float) -> bool:
    clearance = _cell_clearance(cfg)
    ci = (cand.d - cfg.d_min) / (cfg.d_max - cfg.d_min) * cfg.H
    cj = cand.theta / (2.0 * math.pi) * cfg.W
    cx, cy = _metric_xy(cand)
    for p in placed:
        pi = (p.d - cfg.d_min) / (cfg.d_max - cfg.d_min) * cfg.H
        pj = p.theta / (2.0 * math.pi) * cfg.W
        if _cell_distance((ci, cj), (pi, pj), cfg) < min_cells:
            return False
        px, py = _metric_xy(p)
        if math.hypot(cx - px, cy - py) < cand.radius + p.radius + clearance:
            return False
    return True


def _place_instances(spec: SynthSpec, cfg: PolarGridConfig, rng: np.random.Generator) -> list[_Placement]:
    things = sorted(cfg.thing_classes)
    if not things:
        raise ValueError("config has no thing classes to synthesize")
    r_hi = max(spec.footprint_radius[1], spec.overlap_radius)
    if spec.placement_annulus is not None:
        d_lo, d_hi = spec.placement_annulus
    else:
        d_lo = cfg.d_min + r_hi + 0.5
        d_hi = cfg.d_max - r_hi - 0.5
    if d_lo >= d_hi:
        raise ValueError("grid too small for the requested footprints")
    n_base = int(rng.integers(spec.instance_range[0], spec.instance_range[1] + 1))
    placed: list[_Placement] = []
    for n in range(n_base):
        radius = float(rng.uniform(*spec.footprint_radius))
        class_id = int(rng.choice(things))
        for attempt in range(spec.max_place_tries):
            cand = _Placement(
                d=float(rng.uniform(d_lo + radius, d_hi - radius)),
                theta=float(rng.uniform(0.0, 2.0 * math.pi)),
                radius=radius,
                class_id=class_id,
            )
            if _separated(cand, placed, cfg, spec.min_center_separation_cells):
                placed.append(cand)
                break
        else:
            raise RuntimeError(f"could not place instance {n} after {spec.max_place_tries} tries")
    n_partnered = min(spec.overlap_pairs, len(placed))
    radial_bin = (cfg.d_max - cfg.d_min) / cfg.H
    for n in range(n_partnered):
        base = placed[n]
        radius = min(base.radius, spec.overlap_radius)
        gap_m = spec.overlap_factor * (base.radius + radius)
        if gap_m / radial_bin < spec.min_center_separation_cells:
            raise RuntimeError(
                "grid too coarse for overlap pairs: partner centers would fall "
                f"{gap_m / radial_bin:.1f} cells apart, below the "
                f"{spec.min_center_separation_cells:.1f}-cell separation floor"
            )
        for attempt in range(spec.max_place_tries):
            sign = 1.0 if (attempt % 2 == 0) else -1.0
            cand = _Placement(
                d=base.d + sign * gap_m,
                theta=base.theta,
                radius=radius,
                class_id=base.class_id,
            )
            if not (d_lo <= cand.d - cand.radius and cand.d + cand.radius <= d_hi):
                continue
            others = placed[:n] + placed[n + 1:]
            if _separated(cand, others, cfg, spec.min_center_separation_cells):
                placed.append(cand)
                break
        else:
            raise RuntimeError(f"could not place overlap partner for instance {n}")
    return placed


def synth_scene(spec: SynthSpec, cfg: PolarGridConfig, sigma: float = 5.0) -> SynthScene:
    """Generate a scene and its exact target tensors, deterministically."""
    if cfg.mode != "polar":
        raise ValueError("synthetic scenes require a polar grid")
    rng = np.random.default_rng(spec.seed)
    placements = _place_instances(spec, cfg, rng)
    z_bin = (cfg.z_max - cfg.z_min) / cfg.Z
    if spec.instance_z_band is not None:
        z_lo, z_hi = spec.instance_z_band
    else:
        # ground sits in height bin 0; instances start at bin 2
        z_lo = cfg.z_min + 2.05 * z_bin
        z_hi = min(cfg.z_max - 0.05 * z_bin, z_lo + 3.0 * z_bin)
    xs, ys, zs, rs, sems, insts = [], [], [], [], [], []
    if spec.stuff_points > 0:
        if spec.stuff_classes_used:
            stuff_ids = spec.stuff_classes_used
        elif cfg.stuff_classes:
            stuff_ids = (min(cfg.stuff_classes),)
        else:
            raise ValueError("config has no stuff classes for the ground plane")
        lo = cfg.d_min + 0.25
        hi = cfg.d_max - 0.25
        d = np.sqrt(rng.uniform(lo * lo, hi * hi, spec.stuff_points))
        t = rng.uniform(0.0, 2.0 * math.pi, spec.stuff_points)
        xs.append(d * np.cos(t))
        ys.append(d * np.sin(t))
        zs.append(rng.uniform(cfg.z_min + 0.05 * z_bin, cfg.z_min + 0.95 * z_bin, spec.stuff_points))
        rs.append(rng.uniform(0.1, 1.0, spec.stuff_points))
        sems.append(np.asarray(rng.choice(np.asarray(stuff_ids), size=spec.stuff_points), dtype=np.int32))
        insts.append(np.zeros(spec.stuff_points, dtype=np.int32))
    for inst_id, p in enumerate(placements, start=1):
        count = int(rng.integers(spec.points_per_instance[0], spec.points_per_instance[1] + 1))
        cx, cy = _metric_xy(p)
        rr = p.radius * np.sqrt(rng.random(count))
        ang = rng.uniform(0.0, 2.0 * math.pi, count)
        xs.append(cx + rr * np.cos(ang))
        ys.append(cy + rr * np.sin(ang))
        zs.append(rng.uniform(z_lo, z_hi, count))
        rs.append(rng.uniform(0.1, 1.0, count))
        sems.append(np.full(count, p.class_id, dtype=np.int32))
        insts.append(np.full(count, inst_id, dtype=np.int32))
    if xs:
        pts = np.stack([np.concatenate(xs), np.concatenate(ys), np.concatenate(zs), np.concatenate(rs)], axis=1)
        pts = pts.astype(np.float32)
        semantic = np.concatenate(sems)
        instance = np.concatenate(insts)
    else:
        pts = np.zeros((0, 4), dtype=np.float32)
        semantic = np.zeros(0, dtype=np.int32)
        instance = np.zeros(0, dtype=np.int32)
    cloud = PointCloud(pts, semantic=semantic, instance=instance)
    summaries = instance_summaries(cloud, cfg) if len(cloud) else []
    heatmap = gaussian_heatmap(summaries, sigma, cfg)
    offsets, fg = offset_field(cloud, summaries, cfg) if len(cloud) else (
        np.zeros((cfg.H, cfg.W, 2)), np.zeros((cfg.H, cfg.W), dtype=bool))
    semantic_vox = voxel_labels(cloud, cfg) if len(cloud) else np.full(
        (cfg.H, cfg.W, cfg.Z), cfg.ignore_class, dtype=np.int32)
    sem_noisy = heat_noisy = off_noisy = None
    if spec.noise_std > 0:
        heat_noisy = np.clip(heatmap + rng.normal(0.0, spec.noise_std, heatmap.shape), 0.0, 1.0)
        off_noisy = offsets + rng.normal(0.0, spec.noise_std, offsets.shape)
        sem_noisy = semantic_vox.copy()
        occupied = sem_noisy != cfg.ignore_class
        flip = occupied & (rng.random(sem_noisy.shape) < min(spec.noise_std, 1.0))
        classes = np.asarray(cfg.evaluated_classes, dtype=np.int32)
        sem_noisy[flip] = rng.choice(classes, size=int(flip.sum()))
    return SynthScene(
        cloud=cloud,
        semantic_voxels=semantic_vox,
        heatmap=heatmap,
        offsets=offsets,
        foreground=fg,
        summaries=summaries,
        semantic_noisy=sem_noisy,
        heatmap_noisy=heat_noisy,
        offsets_noisy=off_noisy,
    )
