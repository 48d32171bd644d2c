"""Panoptic quality (PQ/SQ/RQ, PQ-dagger) and mIoU over point labelings.

Matching uses the strict IoU > 0.5 rule, which makes pred/gt matching
unique by construction: no two predictions can each overlap more than half
of the same ground-truth segment. Ground-truth thing segments smaller than
the configured minimum point count are dropped and act as void (neither
reward nor penalty). Undersized predicted segments count as false positives
by default; pass ``small_pred_as_void=True`` to drop them instead.

Sums and means run in a canonical order (segments by key, classes
ascending) so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fusion import PanopticLabeling
from .grid import PolarGridConfig

STUFF_SEGMENT = 0  # segment key for the single per-class stuff segment


@dataclass(frozen=True)
class MatchResult:
    """Per-class matching outcome between predicted and GT segments."""

    tps: tuple[tuple[int, int, float], ...]  # (pred_key, gt_key, iou), gt order
    fps: tuple[int, ...]
    fns: tuple[int, ...]
    candidate_iou: float | None = None  # stuff classes: IoU of the class masks


@dataclass(frozen=True)
class ClassStats:
    pq: float
    sq: float
    rq: float
    iou: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class MetricReport:
    """Per-class and aggregated panoptic metrics."""

    per_class: dict[int, ClassStats]
    pq: float
    pq_dagger: float
    rq: float
    sq: float
    pq_things: float
    rq_things: float
    sq_things: float
    pq_stuff: float
    rq_stuff: float
    sq_stuff: float
    miou: float = float("nan")
    class_names: dict[int, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "pq": self.pq,
            "pq_dagger": self.pq_dagger,
            "rq": self.rq,
            "sq": self.sq,
            "pq_things": self.pq_things,
            "rq_things": self.rq_things,
            "sq_things": self.sq_things,
            "pq_stuff": self.pq_stuff,
            "rq_stuff": self.rq_stuff,
            "sq_stuff": self.sq_stuff,
            "miou": self.miou,
            "classes": {},
        }
        for c in sorted(self.per_class):
            s = self.per_class[c]
            out["classes"][str(c)] = {
                "name": self.class_names.get(c, str(c)),
                "pq": s.pq,
                "sq": s.sq,
                "rq": s.rq,
                "iou": s.iou,
                "tp": s.tp,
                "fp": s.fp,
                "fn": s.fn,
            }
        return out

    def format_table(self) -> str:
        lines = []
        for key in ("pq", "pq_dagger", "rq", "sq", "pq_things", "rq_things",
                    "sq_things", "pq_stuff", "rq_stuff", "sq_stuff", "miou"):
            lines.append(f"{key:<24}{getattr(self, key):.6f}")
        for c in sorted(self.per_class):
            s = self.per_class[c]
            name = self.class_names.get(c, f"class_{c}")
            lines.append(
                f"{name:<24}pq={s.pq:.6f} sq={s.sq:.6f} rq={s.rq:.6f} "
                f"iou={s.iou:.6f} tp={s.tp} fp={s.fp} fn={s.fn}"
            )
        return "\n".join(lines)


def segment_sets(
    labeling: PanopticLabeling,
    cfg: PolarGridConfig,
    min_points: int = 1,
) -> dict[int, dict[int, np.ndarray]]:
    """Canonical per-class segments of a labeling.

    Thing classes yield one segment per instance id > 0; segments smaller
    than ``min_points`` are dropped. Stuff classes yield a single segment
    (key ``STUFF_SEGMENT``) holding every point of the class. Points of the
    ignore class or of unconfigured classes yield nothing.

    Returns:
        {class_id: {segment_key: sorted point-index array}}.
    """
    sem = labeling.semantic
    inst = labeling.instance
    out: dict[int, dict[int, np.ndarray]] = {}
    for c in cfg.evaluated_classes:
        cls_idx = np.flatnonzero(sem == c)
        if len(cls_idx) == 0:
            continue
        segs: dict[int, np.ndarray] = {}
        if c in cfg.thing_classes:
            ids = inst[cls_idx]
            for i in np.unique(ids):
                if i <= 0:
                    continue
                seg = cls_idx[ids == i]
                if len(seg) >= min_points:
                    segs[int(i)] = seg
        else:
            segs[STUFF_SEGMENT] = cls_idx
        if segs:
            out[c] = segs
    return out


def match(
    pred_segments: dict[int, dict[int, np.ndarray]],
    gt_segments: dict[int, dict[int, np.ndarray]],
    n_points: int,
) -> dict[int, MatchResult]:
    """Match predicted to ground-truth segments per class with IoU > 0.5."""
    out: dict[int, MatchResult] = {}
    for c in sorted(set(pred_segments) | set(gt_segments)):
        preds = pred_segments.get(c, {})
        gts = gt_segments.get(c, {})
        pred_keys = sorted(preds)
        owner = np.zeros(n_points, dtype=np.int64)
        sizes = np.zeros(len(pred_keys) + 1, dtype=np.int64)
        for dense, key in enumerate(pred_keys, start=1):
            owner[preds[key]] = dense
            sizes[dense] = len(preds[key])
        tps = []
        matched_pred: set[int] = set()
        candidate_iou = None
        for gkey in sorted(gts):
            gseg = gts[gkey]
            inter = np.bincount(owner[gseg], minlength=len(pred_keys) + 1)
            for dense in np.flatnonzero(inter[1:] > 0) + 1:
                union = len(gseg) + sizes[dense] - inter[dense]
                iou = float(inter[dense]) / float(union)
                if gkey == STUFF_SEGMENT and pred_keys[dense - 1] == STUFF_SEGMENT:
                    candidate_iou = iou
                if iou > 0.5:
                    tps.append((pred_keys[dense - 1], int(gkey), iou))
                    matched_pred.add(pred_keys[dense - 1])
                    break
        if candidate_iou is None and gts and STUFF_SEGMENT in gts:
            candidate_iou = 0.0
        matched_gt = {g for _, g, _ in tps}
        fps = tuple(k for k in pred_keys if k not in matched_pred)
        fns = tuple(k for k in sorted(gts) if k not in matched_gt)
        out[c] = MatchResult(tps=tuple(tps), fps=fps, fns=fns, candidate_iou=candidate_iou)
    return out


def panoptic_quality(
    matches: dict[int, MatchResult],
    cfg: PolarGridConfig,
    point_iou: dict[int, float] | None = None,
    miou_value: float = float("nan"),
    class_names: dict[int, str] | None = None,
) -> MetricReport:
    """Reduce match results to PQ/SQ/RQ per class and aggregated.

    Per class: SQ is the mean IoU over true positives, RQ is
    TP / (TP + FN/2 + FP/2), and PQ = SQ * RQ. PQ-dagger replaces the PQ of
    stuff classes with their plain class IoU. Classes without any segment on
    either side are excluded from the unweighted aggregate means.
    """
    per_class: dict[int, ClassStats] = {}
    for c in sorted(matches):
        m = matches[c]
        tp, fp, fn = len(m.tps), len(m.fps), len(m.fns)
        if tp + fp + fn == 0:
            continue
        sq = sum(iou for _, _, iou in m.tps) / tp if tp else 0.0
        rq = tp / (tp + 0.5 * fn + 0.5 * fp)
        iou = float("nan")
        if point_iou is not None and c in point_iou:
            iou = point_iou[c]
        elif m.candidate_iou is not None:
            iou = m.candidate_iou
        per_class[c] = ClassStats(pq=sq * rq, sq=sq, rq=rq, iou=iou, tp=tp, fp=fp, fn=fn)

    def dagger(c: int) -> float:
        s = per_class[c]
        if c in cfg.stuff_classes:
            return s.iou if s.iou == s.iou else 0.0  # NaN-safe
        return s.pq

    def agg(classes, attr) -> float:
        vals = [getattr(per_class[c], attr) for c in classes]
        return sum(vals) / len(vals) if vals else 0.0

    evaluated = sorted(per_class)
    things = [c for c in evaluated if c in cfg.thing_classes]
    stuff = [c for c in evaluated if c in cfg.stuff_classes]
    dag = [dagger(c) for c in evaluated]
    return MetricReport(
        per_class=per_class,
        pq=agg(evaluated, "pq"),
        pq_dagger=sum(dag) / len(dag) if dag else 0.0,
        rq=agg(evaluated, "rq"),
        sq=agg(evaluated, "sq"),
        pq_things=agg(things, "pq"),
        rq_things=agg(things, "rq"),
        sq_things=agg(things, "sq"),
        pq_stuff=agg(stuff, "pq"),
        rq_stuff=agg(stuff, "rq"),
        sq_stuff=agg(stuff, "sq"),
        miou=miou_value,
        class_names=class_names or {},
    )


def miou(
    pred: PanopticLabeling,
    gt: PanopticLabeling,
    cfg: PolarGridConfig,
) -> tuple[dict[int, float], float]:
    """Point-level per-class IoU and its mean.

    Points whose ground truth is the ignore class are excluded. The mean
    runs over configured classes present in either labeling.
    """
    if len(pred) != len(gt):
        raise ValueError(f"pred has {len(pred)} points, gt has {len(gt)}")
    valid = gt.semantic != cfg.ignore_class
    p = pred.semantic[valid]
    g = gt.semantic[valid]
    per_class: dict[int, float] = {}
    for c in cfg.evaluated_classes:
        pm = p == c
        gm = g == c
        union = int(np.count_nonzero(pm | gm))
        if union == 0:
            continue
        per_class[c] = int(np.count_nonzero(pm & gm)) / union
    vals = [per_class[c] for c in sorted(per_class)]
    return per_class, (sum(vals) / len(vals) if vals else 0.0)


def evaluate(
    pred: PanopticLabeling,
    gt: PanopticLabeling,
    cfg: PolarGridConfig,
    small_pred_as_void: bool = False,
    class_names: dict[int, str] | None = None,
) -> MetricReport:
    """Full metric suite for a predicted labeling against ground truth."""
    if len(pred) != len(gt):
        raise ValueError(f"pred has {len(pred)} points, gt has {len(gt)}")
    valid = gt.semantic != cfg.ignore_class
    pred_v = PanopticLabeling(pred.semantic[valid], pred.instance[valid])
    gt_v = PanopticLabeling(gt.semantic[valid], gt.instance[valid])
    pred_min = cfg.min_instance_points if small_pred_as_void else 1
    pred_segs = segment_sets(pred_v, cfg, min_points=pred_min)
    gt_segs = segment_sets(gt_v, cfg, min_points=cfg.min_instance_points)
    matches = match(pred_segs, gt_segs, len(pred_v))
    per_class_iou, mean_iou = miou(pred_v, gt_v, cfg)
    report = panoptic_quality(
        matches, cfg, point_iou=per_class_iou, miou_value=mean_iou, class_names=class_names
    )
    return report
