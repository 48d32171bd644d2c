"""Shared fixtures and independent reference implementations.

The brute-force functions here are deliberately naive (python loops, sets,
all-pairs scans) so they stay independent of the vectorized production
code they check.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from polarpanoptic import PointCloud, PolarGridConfig, from_polar


@pytest.fixture
def small_cfg():
    return make_small_cfg()


def make_small_cfg(**overrides) -> PolarGridConfig:
    base = dict(
        d_min=2.0, d_max=30.0, z_min=-2.0, z_max=2.0, H=64, W=48, Z=8,
        thing_classes=frozenset({1, 2, 3}), stuff_classes=frozenset({4, 5}),
        ignore_class=0, min_instance_points=5,
    )
    base.update(overrides)
    return PolarGridConfig(**base)


def point_at(cfg: PolarGridConfig, i_f: float, j_f: float, k_f: float, r: float = 0.5) -> np.ndarray:
    """Cartesian (x, y, z, r) row whose fractional grid coords are (i_f, j_f, k_f)."""
    d = cfg.d_min + i_f * (cfg.d_max - cfg.d_min) / cfg.H
    theta = j_f * 2.0 * math.pi / cfg.W
    z = cfg.z_min + k_f * (cfg.z_max - cfg.z_min) / cfg.Z
    xyz = from_polar([d, theta, z])
    return np.array([xyz[0], xyz[1], xyz[2], r])


def cloud_at(cfg, coords, semantic=None, instance=None) -> PointCloud:
    """PointCloud from a list of fractional (i_f, j_f, k_f) grid positions."""
    rows = np.stack([point_at(cfg, *c) for c in coords])
    return PointCloud(rows, semantic=semantic, instance=instance)


def random_cloud(rng, cfg, n, with_labels=False, oob_fraction=0.0) -> PointCloud:
    d = rng.uniform(cfg.d_min, cfg.d_max, n)
    if oob_fraction > 0:
        oob = rng.random(n) < oob_fraction
        d[oob] = cfg.d_max + rng.uniform(0.5, 5.0, int(oob.sum()))
    theta = rng.uniform(0, 2 * math.pi, n)
    z = rng.uniform(cfg.z_min, cfg.z_max, n)
    pts = np.stack([d * np.cos(theta), d * np.sin(theta), z, rng.uniform(0.05, 1.0, n)], axis=1)
    semantic = instance = None
    if with_labels:
        semantic = rng.choice(sorted(cfg.thing_classes | cfg.stuff_classes), n).astype(np.int32)
        instance = np.zeros(n, dtype=np.int32)
        thing = np.isin(semantic, sorted(cfg.thing_classes))
        instance[thing] = rng.integers(1, 6, int(thing.sum()))
    return PointCloud(pts, semantic=semantic, instance=instance)


def brute_nms(heatmap: np.ndarray, kernel: int, threshold: float, top_k: int):
    """All-cells window-maximum scan with the lexicographic tie rule."""
    h = np.asarray(heatmap)
    H, W = h.shape
    r = kernel // 2
    hits = []
    for i in range(H):
        for j in range(W):
            v = h[i, j]
            if v < threshold:
                continue
            i0, i1 = max(0, i - r), min(H, i + r + 1)
            j0, j1 = max(0, j - r), min(W, j + r + 1)
            if v < h[i0:i1, j0:j1].max():
                continue
            first = None
            for ii in range(i0, i1):
                for jj in range(j0, j1):
                    if h[ii, jj] == v:
                        first = (ii, jj)
                        break
                if first is not None:
                    break
            if first == (i, j):
                hits.append((i, j, float(v)))
    hits.sort(key=lambda t: (-t[2], t[0] * W + t[1]))
    return hits[:top_k]


def brute_circular_mean(angles) -> float:
    """Unwrap-based circular mean, assuming a cluster spanning < pi."""
    angles = sorted(float(a) % (2 * math.pi) for a in angles)
    shifted = [a - 2 * math.pi if a > math.pi else a for a in angles]
    return (sum(shifted) / len(shifted)) % (2 * math.pi)


def brute_pq_report(pred_sem, pred_inst, gt_sem, gt_inst, cfg, small_pred_as_void=False):
    """All-pairs PQ/SQ/RQ/PQ-dagger/mIoU with python sets.

    Mirrors the documented rules (strict IoU > 0.5, small GT segments void,
    canonical summation order) but shares no code with the library.
    """
    things = set(cfg.thing_classes)
    stuff = set(cfg.stuff_classes)
    evaluated = things | stuff
    valid = [n for n in range(len(gt_sem)) if gt_sem[n] != cfg.ignore_class]

    def build(sem, inst, min_pts):
        segs = {}
        for n in valid:
            c = int(sem[n])
            if c not in evaluated:
                continue
            if c in things:
                if inst[n] <= 0:
                    continue
                key = (c, int(inst[n]))
            else:
                key = (c, 0)
            segs.setdefault(key, set()).add(n)
        return {k: v for k, v in segs.items()
                if not (k[0] in things and len(v) < min_pts)}

    preds = build(pred_sem, pred_inst, cfg.min_instance_points if small_pred_as_void else 1)
    gts = build(gt_sem, gt_inst, cfg.min_instance_points)

    point_iou = {}
    for c in sorted(evaluated):
        pm = {n for n in valid if pred_sem[n] == c}
        gm = {n for n in valid if gt_sem[n] == c}
        union = len(pm | gm)
        if union:
            point_iou[c] = len(pm & gm) / union

    per_class = {}
    classes = sorted({k[0] for k in preds} | {k[0] for k in gts})
    for c in classes:
        p_keys = sorted(k for k in preds if k[0] == c)
        g_keys = sorted(k for k in gts if k[0] == c)
        tps = []
        matched_p, matched_g = set(), set()
        for g in g_keys:
            for p in p_keys:
                if p in matched_p:
                    continue
                inter = len(preds[p] & gts[g])
                if inter == 0:
                    continue
                iou = inter / len(preds[p] | gts[g])
                if iou > 0.5:
                    tps.append((p, g, iou))
                    matched_p.add(p)
                    matched_g.add(g)
                    break
        fp = len([p for p in p_keys if p not in matched_p])
        fn = len([g for g in g_keys if g not in matched_g])
        tp = len(tps)
        sq = sum(iou for _, _, iou in tps) / tp if tp else 0.0
        rq = tp / (tp + 0.5 * fn + 0.5 * fp)
        per_class[c] = {
            "pq": sq * rq, "sq": sq, "rq": rq,
            "iou": point_iou.get(c, float("nan")),
            "tp": tp, "fp": fp, "fn": fn,
        }

    def mean(vals):
        vals = list(vals)
        return sum(vals) / len(vals) if vals else 0.0

    evaluated_now = sorted(per_class)
    t_cls = [c for c in evaluated_now if c in things]
    s_cls = [c for c in evaluated_now if c in stuff]
    dagger = [per_class[c]["iou"] if c in stuff else per_class[c]["pq"] for c in evaluated_now]
    miou_vals = [point_iou[c] for c in sorted(point_iou)]
    return {
        "per_class": per_class,
        "pq": mean(per_class[c]["pq"] for c in evaluated_now),
        "pq_dagger": mean(dagger),
        "rq": mean(per_class[c]["rq"] for c in evaluated_now),
        "sq": mean(per_class[c]["sq"] for c in evaluated_now),
        "pq_things": mean(per_class[c]["pq"] for c in t_cls),
        "rq_things": mean(per_class[c]["rq"] for c in t_cls),
        "sq_things": mean(per_class[c]["sq"] for c in t_cls),
        "pq_stuff": mean(per_class[c]["pq"] for c in s_cls),
        "rq_stuff": mean(per_class[c]["rq"] for c in s_cls),
        "sq_stuff": mean(per_class[c]["sq"] for c in s_cls),
        "miou": mean(miou_vals),
    }


def random_labeling(rng, n, n_classes=6, n_instances=8):
    """Random (semantic, instance) arrays for metric stress tests."""
    sem = rng.integers(0, n_classes, n).astype(np.int32)
    inst = np.zeros(n, dtype=np.int32)
    cfg_things = {1, 2, 3}
    thing = np.isin(sem, sorted(cfg_things))
    inst[thing] = rng.integers(0, n_instances + 1, int(thing.sum()))
    return sem, inst
