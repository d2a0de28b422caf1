"""Command-line surface: synth, encode/decode walls, detect, loss, eval, pipeline.

Every command is a thin shell over library calls. Exit codes: 0 success,
2 input/config error, 3 scene-id misalignment, 4 closed-loop self-test
failure. The LAYOUT3D_SEED environment variable overrides config seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio, plots
from .assign import assign_objects, assign_walls
from .errors import Layout3DError, SceneAlignmentError
from .geometry import PointCloud, Scene
from .infer import decode_detections, decode_walls, nms_boxes, nms_walls
from .losses import total_loss
from .metrics import evaluate
from .pipeline import closed_loop, default_category_levels
from .synth import SynthConfig, generate_scene
from .voxels import LocationSet
from .wall_codec import SCHEMES, decode_params, encode_params

SEED_ENV_VAR = "LAYOUT3D_SEED"


def _load_synth_config(path) -> SynthConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    kwargs = {}
    for key, value in doc.items():
        if key.endswith("_range"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    if SEED_ENV_VAR in os.environ:
        kwargs["seed"] = int(os.environ[SEED_ENV_VAR])
    return SynthConfig(**kwargs)


def _synth_one(args) -> str:
    cfg, index, out_dir, binary_ply = args
    scene = generate_scene(cfg.with_seed(cfg.seed + index))
    path = Path(out_dir) / f"scene_{index:04d}.json"
    fileio.save_scene(path, scene, points="ply", binary_ply=binary_ply)
    return path.name


def cmd_synth(args) -> int:
    cfg = _load_synth_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(cfg, i, str(out_dir), not args.ascii_ply) for i in range(args.count)]
    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            names = list(pool.map(_synth_one, work))
    else:
        names = [_synth_one(w) for w in work]
    print(f"wrote {len(names)} scenes to {out_dir}")
    return 0


def cmd_encode_walls(args) -> int:
    scene = fileio.load_scene(args.scene)
    anchors = fileio.load_anchors(args.anchors)
    if anchors.shape[0] != len(scene.walls):
        raise ValueError(
            f"anchor count {anchors.shape[0]} does not match wall count {len(scene.walls)}"
        )
    rows = [encode_params(args.scheme, wall, anchor) for wall, anchor in zip(scene.walls, anchors)]
    fileio.write_json(
        args.out,
        {"scheme": args.scheme, "anchors": anchors, "params": np.array(rows).reshape(len(rows), -1)},
    )
    print(f"encoded {len(rows)} walls ({args.scheme}) to {args.out}")
    return 0


def cmd_decode_walls(args) -> int:
    doc = json.loads(Path(args.targets).read_text(encoding="utf-8"))
    scheme = args.scheme or doc.get("scheme")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    anchors = fileio.load_anchors(args.anchors) if args.anchors else np.asarray(doc["anchors"], dtype=np.float64)
    params = np.asarray(doc["params"], dtype=np.float64)
    if anchors.shape[0] != params.shape[0]:
        raise ValueError(f"{anchors.shape[0]} anchors vs {params.shape[0]} parameter rows")
    walls = tuple(
        decode_params(scheme, anchor, row).with_score(1.0) for anchor, row in zip(anchors, params)
    )
    scene = Scene(cloud=PointCloud(np.zeros((0, 6))), walls=walls)
    fileio.write_json(args.out, fileio.scene_to_dict(scene))
    print(f"decoded {len(walls)} walls to {args.out}")
    return 0


def cmd_detect(args) -> int:
    raw = fileio.load_raw_outputs(args.raw)
    dets = nms_boxes(
        decode_detections(raw.locations, raw.logits, raw.delta_t, raw.log_size, args.score_thr),
        args.nms_iou,
    )
    wres = decode_walls(raw.locations, raw.wall_logits, raw.wall_params, raw.scheme, args.score_thr)
    walls = nms_walls(wres.walls, args.wall_nms_dist)
    scene = Scene(cloud=PointCloud(np.zeros((0, 6))), objects=tuple(dets), walls=tuple(walls))
    fileio.write_json(args.out, fileio.scene_to_dict(scene))
    print(f"objects={len(dets)} walls={len(walls)} dropped={wres.dropped}")
    return 0


def _location_sets_by_level(raw) -> dict[int, tuple[LocationSet, np.ndarray]]:
    """Group raw locations by level tag; indices fall back to row order."""
    if raw.levels is None:
        rows = np.arange(raw.locations.shape[0])
        idx = np.stack([rows, np.zeros_like(rows), np.zeros_like(rows)], axis=1)
        locs = LocationSet(level_cm=32, points=raw.locations, indices=idx)
        return {16: (locs, rows), 32: (locs, rows)}
    out = {}
    for level in sorted(set(raw.levels.tolist())):
        rows = np.nonzero(raw.levels == level)[0]
        sub = np.arange(len(rows))
        idx = np.stack([sub, np.zeros_like(sub), np.zeros_like(sub)], axis=1)
        out[int(level)] = (
            LocationSet(level_cm=int(level), points=raw.locations[rows], indices=idx),
            rows,
        )
    return out


def cmd_loss(args) -> int:
    raw = fileio.load_raw_outputs(args.raw)
    scene = fileio.load_scene(args.scene)
    if args.levels:
        clm = fileio.load_category_levels(args.levels, scene.categories)
    else:
        clm = default_category_levels(scene.categories)

    by_level = _location_sets_by_level(raw)
    det_pairs = []
    if scene.objects:
        level_sets = {lvl: ls for lvl, (ls, _) in by_level.items()}
        assignment = assign_objects(level_sets, scene.objects, clm, args.k)
        for pair in assignment.pairs:
            rows = by_level[pair.level_cm][1]
            det_pairs.append((int(rows[pair.location_index]), pair.target_index))

    wall_pairs = []
    if scene.walls:
        wall_level = 32 if 32 in by_level else sorted(by_level)[0]
        wall_locs, wall_rows = by_level[wall_level]
        mode = "bev" if raw.scheme == "bev2h" else "space3d"
        assignment = assign_walls(wall_locs, scene.walls, args.k, mode)
        for pair in assignment.pairs:
            wall_pairs.append((int(wall_rows[pair.location_index]), pair.target_index))

    result = total_loss(
        det_logits=raw.logits,
        det_reg=np.hstack([raw.delta_t, raw.log_size]),
        det_locations=raw.locations,
        det_assignment=det_pairs,
        objects=scene.objects,
        wall_logits=raw.wall_logits,
        wall_reg=raw.wall_params,
        wall_locations=raw.locations,
        wall_assignment=wall_pairs,
        walls=scene.walls,
        scheme=raw.scheme,
    )
    doc = {"total": result.value, **result.terms}
    text = fileio.dumps_canonical(doc)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_eval(args) -> int:
    preds = fileio.load_scene_list(args.pred)
    gts = fileio.load_scene_list(args.gt)
    if len(preds) == 1 and len(gts) == 1:
        # a single scene on each side is unambiguous; ignore the file stems
        preds = [(gts[0][0], preds[0][1])]
    pred_ids = [sid for sid, _ in preds]
    gt_ids = [sid for sid, _ in gts]
    if sorted(pred_ids) != sorted(gt_ids):
        raise SceneAlignmentError(
            f"scene ids differ: predictions {sorted(pred_ids)[:5]}... vs ground truth {sorted(gt_ids)[:5]}..."
        )
    pred_by_id = dict(preds)
    ordered_ids = sorted(gt_ids)
    gt_by_id = dict(gts)
    pred_scenes = [pred_by_id[sid] for sid in ordered_ids]
    gt_scenes = [gt_by_id[sid] for sid in ordered_ids]

    report = evaluate(
        pred_scenes,
        gt_scenes,
        corner_thr=args.corner_thr,
        match=args.match,
        thickness=args.thickness,
        jobs=args.jobs,
    )
    class_names = {}
    for scene in gt_scenes:
        class_names.update(scene.categories)
    fileio.save_report_json(args.out, report, class_names)
    if args.csv:
        fileio.save_report_csv(args.csv, report, class_names)
    plot_dir = args.plots
    if plot_dir is None and args.csv:
        csv_path = Path(args.csv)
        plot_dir = csv_path.parent / f"{csv_path.stem}_figures"
    if plot_dir is not None:
        scene_pairs = [(sid, gt_by_id[sid], pred_by_id[sid]) for sid in ordered_ids]
        plots.save_eval_figures(report, plot_dir, class_names, scene_pairs)
    print(fileio.summary_line(report))
    return 0


def cmd_pipeline(args) -> int:
    scene = fileio.load_scene(args.scene)
    clm = None
    if args.levels:
        clm = fileio.load_category_levels(args.levels, scene.categories)
    result = closed_loop(scene, scheme=args.scheme, category_levels=clm, k=args.k)
    fileio.save_report_json(args.out, result.report, scene.categories)
    if args.raw_out:
        fileio.save_raw_outputs(args.raw_out, result.raw)
    print(fileio.summary_line(result.report))
    if not result.perfect:
        print("closed-loop self-test FAILED: metrics are not perfect", file=sys.stderr)
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layout3d",
        description="Layout estimation and 3D detection toolkit: synthetic scenes, "
        "wall codecs, decoding, metrics, and the closed-loop self-test.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenes")
    p.add_argument("--config", required=True, help="SynthConfig JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--ascii-ply", action="store_true", help="write ascii instead of binary PLY")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode-walls", help="encode scene walls into parameter rows")
    p.add_argument("--scene", required=True)
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--anchors", required=True, help="JSON with per-wall anchor locations")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode_walls)

    p = sub.add_parser("decode-walls", help="decode parameter rows back into walls")
    p.add_argument("--targets", required=True, help="output of encode-walls")
    p.add_argument("--anchors", help="override anchors JSON")
    p.add_argument("--scheme", choices=SCHEMES, help="override scheme")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode_walls)

    p = sub.add_parser("detect", help="decode raw head outputs into a predictions scene")
    p.add_argument("--raw", required=True, help="raw head-output JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--score-thr", type=float, default=0.01)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--wall-nms-dist", type=float, default=0.75)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("loss", help="evaluate the training loss from files")
    p.add_argument("--raw", required=True, help="raw head-output JSON")
    p.add_argument("--scene", required=True, help="ground-truth scene JSON")
    p.add_argument("--levels", help="category-name to level JSON")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--out", help="also write the loss breakdown JSON here")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", help="benchmark predictions against ground truth")
    p.add_argument("--pred", required=True, help="scene file, list file, or directory")
    p.add_argument("--gt", required=True, help="scene file, list file, or directory")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write the plot-ready CSV here")
    p.add_argument("--plots", help="directory for report figures (default: next to the CSV)")
    p.add_argument("--corner-thr", type=float, default=0.75)
    p.add_argument("--match", choices=("score", "distance"), default="score")
    p.add_argument("--thickness", type=float, default=0.10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="closed-loop self-test on one scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--scheme", choices=SCHEMES, default="bev2h")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--levels", help="category-name to level JSON")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--raw-out", help="also dump the synthesized raw head outputs")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SceneAlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (Layout3DError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
