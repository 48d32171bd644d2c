"""Command line interface composing the pipeline stages over files.

Subcommands: voxelize, targets, fuse, eval, augment, bank, synth, render.
Each command reads its declared inputs, writes its declared outputs
atomically, and prints a one-line summary. Outputs of one command are
directly consumable by its downstream command. Exit status is 0 on
success and nonzero with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import formats, render
from .augment import AugmentParams, augment_scan, build_bank, load_bank, save_bank
from .config import PipelineConfig, load_config
from .formats import FileFormatError
from .fusion import FusionParams, fuse, nms_topk
from .metrics import evaluate
from .synth import SynthScene, SynthSpec, synth_scene
from .targets import gaussian_heatmap, instance_summaries, offset_field
from .voxelizer import point_features, group, scatter_max, visibility, voxel_labels


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="semantickitti",
                   help="preset name, config file path, or file under $POLARPANOPTIC_CONFIG_DIR")


def _fusion_params(cfg: PipelineConfig, args) -> FusionParams:
    source = cfg.fusion
    if getattr(args, "params", None):
        source = load_config(args.params).fusion
    base = dataclasses.asdict(source)
    for name in ("nms_kernel", "nms_threshold", "top_k"):
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    return FusionParams(**base)


def cmd_voxelize(args) -> int:
    cfg = load_config(args.config)
    cloud = formats.read_scan(args.points, args.labels)
    grouped = group(cloud, cfg.grid)
    written = []
    if args.out_features:
        tensor = scatter_max(grouped, point_features(cloud, cfg.grid))
        formats.write_tensor(args.out_features, tensor.astype(np.float32))
        written.append(args.out_features)
    if args.out_visibility:
        formats.write_tensor(args.out_visibility, visibility(cloud, cfg.grid))
        written.append(args.out_visibility)
    if args.out_voxel_labels:
        if cloud.semantic is None:
            raise ValueError("--out-voxel-labels requires --labels")
        formats.write_tensor(args.out_voxel_labels, voxel_labels(cloud, cfg.grid).astype(np.uint32))
        written.append(args.out_voxel_labels)
    if not written:
        raise ValueError("nothing to do: pass at least one --out-* flag")
    print(f"voxelize: {len(cloud)} points, {len(grouped.unique_cells)} occupied cells -> {', '.join(written)}")
    return 0


def cmd_targets(args) -> int:
    cfg = load_config(args.config)
    cloud = formats.read_scan(args.points, args.labels)
    sigma = args.sigma if args.sigma is not None else cfg.heatmap_sigma
    summaries = instance_summaries(cloud, cfg.grid)
    heatmap = gaussian_heatmap(summaries, sigma, cfg.grid)
    offsets, mask = offset_field(cloud, summaries, cfg.grid)
    formats.write_tensor(args.out_heatmap, heatmap.astype(np.float32))
    formats.write_tensor(args.out_offsets, offsets.astype(np.float32))
    written = [args.out_heatmap, args.out_offsets]
    if args.out_mask:
        formats.write_tensor(args.out_mask, mask.astype(np.uint8))
        written.append(args.out_mask)
    print(f"targets: {len(summaries)} instances, sigma={sigma:g} -> {', '.join(written)}")
    return 0


def cmd_fuse(args) -> int:
    cfg = load_config(args.config)
    params = _fusion_params(cfg, args)
    semantic = formats.read_tensor(args.semantic)
    heatmap = formats.read_tensor(args.heatmap)
    offsets = formats.read_tensor(args.offsets)
    if semantic.dtype == np.uint32:
        semantic = semantic.astype(np.int32)
    cloud = formats.read_scan(args.points)
    labeling = fuse(semantic, heatmap, offsets, cloud, cfg.grid, params)
    formats.write_labeling(args.out, labeling)
    n_centers = len(nms_topk(heatmap, params))
    n_instances = len(np.unique(labeling.instance[labeling.instance > 0]))
    print(f"fuse: {n_centers} centers, {n_instances} instances over {len(cloud)} points -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pred = formats.read_labeling(args.pred)
    gt = formats.read_labeling(args.gt)
    if len(pred) != len(gt):
        raise formats.CountMismatchError(f"pred has {len(pred)} labels, gt has {len(gt)}")
    report = evaluate(pred, gt, cfg.grid, small_pred_as_void=args.small_pred_as_void,
                      class_names=cfg.class_names)
    if args.out_json:
        formats.atomic_write_bytes(args.out_json, json.dumps(report.as_dict(), indent=1).encode())
    if args.out_table:
        formats.atomic_write_bytes(args.out_table, (report.format_table() + "\n").encode())
    print(f"eval: PQ={report.pq:.3f} PQdagger={report.pq_dagger:.3f} RQ={report.rq:.3f} "
          f"SQ={report.sq:.3f} mIoU={report.miou:.3f}")
    return 0


def cmd_augment(args) -> int:
    cfg = load_config(args.config)
    cloud = formats.read_scan(args.points, args.labels)
    base = dataclasses.asdict(cfg.augment)
    if args.paste_count is not None:
        base["paste_count"] = args.paste_count
    params = AugmentParams(**base)
    seed = args.seed if args.seed is not None else params.seed
    rng = np.random.default_rng(seed)
    bank = load_bank(args.bank) if args.bank else None
    if bank is None and params.paste_count > 0:
        params = dataclasses.replace(params, paste_count=0)
    out = augment_scan(cloud, bank, params, rng, scene=not args.no_scene)
    formats.write_scan(args.out_points, out, args.out_labels)
    print(f"augment: {len(cloud)} -> {len(out)} points (seed={seed}) -> {args.out_points}, {args.out_labels}")
    return 0


def cmd_bank(args) -> int:
    cfg = load_config(args.config)
    scans, ids = [], []
    for pts_path, lbl_path in args.scan:
        scans.append(formats.read_scan(pts_path, lbl_path))
        ids.append(os.path.basename(pts_path))
    bank = build_bank(scans, cfg.grid, source_ids=ids)
    save_bank(args.out, bank)
    print(f"bank: {len(bank)} instances from {len(scans)} scans, classes {list(bank.classes)} -> {args.out}")
    return 0


def _write_scene(scene: SynthScene, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    formats.write_scan(os.path.join(out_dir, "points.bin"), scene.cloud,
                       os.path.join(out_dir, "labels.label"))
    semantic = scene.semantic_noisy if scene.semantic_noisy is not None else scene.semantic_voxels
    heatmap = scene.heatmap_noisy if scene.heatmap_noisy is not None else scene.heatmap
    offsets = scene.offsets_noisy if scene.offsets_noisy is not None else scene.offsets
    formats.write_tensor(os.path.join(out_dir, "semantic.ppt"), semantic.astype(np.uint32))
    formats.write_tensor(os.path.join(out_dir, "heatmap.ppt"), heatmap.astype(np.float32))
    formats.write_tensor(os.path.join(out_dir, "offsets.ppt"), offsets.astype(np.float32))


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    spec = SynthSpec(
        seed=args.seed,
        instance_range=tuple(args.instances),
        stuff_points=args.stuff_points,
        overlap_pairs=args.overlap_pairs,
        noise_std=args.noise_std,
    )
    scene = synth_scene(spec, cfg.grid, sigma=cfg.heatmap_sigma)
    _write_scene(scene, args.out)
    print(f"synth: {len(scene.cloud)} points, {len(scene.summaries)} instances (seed={args.seed}) -> {args.out}")
    return 0


def cmd_render(args) -> int:
    cfg = load_config(args.config)
    if args.voxel_labels:
        labels = formats.read_tensor(args.voxel_labels).astype(np.int32)
        centers = None
        if args.heatmap:
            heatmap = formats.read_tensor(args.heatmap)
            centers = [c for c, _ in nms_topk(heatmap, cfg.fusion)]
        image = render.render_bev(labels, cfg.grid, centers)
    elif args.heatmap:
        image = render.render_heatmap(formats.read_tensor(args.heatmap))
    else:
        raise ValueError("pass --voxel-labels and/or --heatmap")
    render.write_ppm(args.out, image)
    print(f"render: {image.shape[1]}x{image.shape[0]} image -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarpanoptic",
                                     description="Polar BEV panoptic segmentation pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("voxelize", help="grid features, visibility, and voxel labels from a scan")
    _add_config_arg(p)
    p.add_argument("--points", required=True)
    p.add_argument("--labels")
    p.add_argument("--out-features")
    p.add_argument("--out-visibility")
    p.add_argument("--out-voxel-labels")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("targets", help="center heatmap and offset field from a labeled scan")
    _add_config_arg(p)
    p.add_argument("--points", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out-heatmap", required=True)
    p.add_argument("--out-offsets", required=True)
    p.add_argument("--out-mask")
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("fuse", help="panoptic fusion of prediction tensors onto a point cloud")
    _add_config_arg(p)
    p.add_argument("--semantic", required=True)
    p.add_argument("--heatmap", required=True)
    p.add_argument("--offsets", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--params", help="config file whose fusion section overrides --config")
    p.add_argument("--nms-kernel", type=int, dest="nms_kernel")
    p.add_argument("--nms-threshold", type=float, dest="nms_threshold")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="panoptic quality and mIoU of predicted labels against ground truth")
    _add_config_arg(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--small-pred-as-void", action="store_true")
    p.add_argument("--out-json")
    p.add_argument("--out-table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="oversample, per-instance moves, and scene transforms")
    _add_config_arg(p)
    p.add_argument("--points", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--bank")
    p.add_argument("--seed", type=int)
    p.add_argument("--paste-count", type=int, dest="paste_count")
    p.add_argument("--no-scene", action="store_true")
    p.add_argument("--out-points", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("bank", help="build an instance bank from labeled scans")
    _add_config_arg(p)
    p.add_argument("--scan", nargs=2, action="append", required=True,
                   metavar=("POINTS", "LABELS"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground-truth tensors")
    _add_config_arg(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, nargs=2, default=(4, 8), metavar=("LO", "HI"))
    p.add_argument("--stuff-points", type=int, default=12000)
    p.add_argument("--overlap-pairs", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="render BEV tensors to a PPM image")
    _add_config_arg(p)
    p.add_argument("--voxel-labels")
    p.add_argument("--heatmap")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileFormatError, FileNotFoundError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
