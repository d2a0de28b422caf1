"""Shared generators and independent brute-force oracles for the tests.

Oracles deliberately re-derive results from first principles (explicit
distance matrices, exhaustive scans, shapely polygons, plain PR
tabulation) so they share no code path with the library implementations
they check.
"""

from __future__ import annotations

import math

import numpy as np

from layout3d import Box3, DetectedObject, Wall, canonicalize_wall


def random_wall(rng: np.random.Generator, floor: bool = False) -> Wall:
    """Random vertical wall with a horizontal lower edge."""
    theta = rng.uniform(0.0, 2.0 * np.pi)
    length = rng.uniform(0.5, 5.0)
    height = rng.uniform(0.5, 3.0)
    cx, cy = rng.uniform(-5.0, 5.0, size=2)
    z0 = 0.0 if floor else rng.uniform(-1.0, 2.0)
    d = np.array([math.cos(theta), math.sin(theta), 0.0])
    la = np.array([cx, cy, z0]) - 0.5 * length * d
    lb = np.array([cx, cy, z0]) + 0.5 * length * d
    lift = np.array([0.0, 0.0, height])
    return canonicalize_wall([la, lb, lb + lift, la + lift])


def random_box(rng: np.random.Generator) -> Box3:
    return Box3(center=rng.uniform(-5.0, 5.0, size=3), size=rng.uniform(0.2, 2.0, size=3))


def random_detection(rng: np.random.Generator, categories=(1, 2, 3)) -> DetectedObject:
    return DetectedObject(
        box=random_box(rng),
        category=int(rng.choice(categories)),
        score=float(rng.uniform(0.05, 1.0)),
    )


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Per-coordinate central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (f(hi) - f(lo)) / (2.0 * step)
    return grad


def boxes_iou_reference(a: Box3, b: Box3) -> float:
    """Independent axis-aligned IoU (scalar loops, no shared code)."""
    inter = 1.0
    for i in range(3):
        lo = max(a.center[i] - a.size[i] / 2, b.center[i] - b.size[i] / 2)
        hi = min(a.center[i] + a.size[i] / 2, b.center[i] + b.size[i] / 2)
        if hi <= lo:
            return 0.0
        inter *= hi - lo
    va = a.size[0] * a.size[1] * a.size[2]
    vb = b.size[0] * b.size[1] * b.size[2]
    return inter / (va + vb - inter)


def wall_distance_reference(a: Wall, b: Wall) -> float:
    """Corner distance via explicit enumeration of both end orderings."""
    best = math.inf
    for perm in ((0, 1, 2, 3), (1, 0, 3, 2)):
        worst = 0.0
        for i, j in zip(range(4), perm):
            worst = max(worst, float(np.linalg.norm(a.corners[i] - b.corners[j])))
        best = min(best, worst)
    return best


def oracle_nms_boxes(dets, iou_thr):
    """Exhaustive greedy NMS: repeatedly take the best remaining box."""
    alive = list(range(len(dets)))
    kept = []
    while alive:
        best = min(alive, key=lambda i: (-dets[i].score, i))
        kept.append(best)
        alive = [
            i
            for i in alive
            if i != best
            and not (
                dets[i].category == dets[best].category
                and boxes_iou_reference(dets[i].box, dets[best].box) > iou_thr
            )
        ]
    return [dets[i] for i in kept]


def oracle_nms_walls(walls, dist_thr):
    alive = list(range(len(walls)))
    kept = []

    def score(w):
        return w.score if w.score is not None else 0.0

    while alive:
        best = min(alive, key=lambda i: (-score(walls[i]), i))
        kept.append(best)
        alive = [
            i
            for i in alive
            if i != best and not wall_distance_reference(walls[i], walls[best]) < dist_thr
        ]
    return [walls[i] for i in kept]


def oracle_assign(candidates_by_target, k):
    """Brute-force assignment from explicit candidate tables.

    candidates_by_target: per target a list of
    (distance, cell_index_tuple, location_index, level, ref_key).
    Returns the set of (level, location_index, target_index) grants.
    """
    wanted = {}
    for t_idx, rows in enumerate(candidates_by_target):
        ranked = sorted(rows, key=lambda r: (r[0], r[1]))
        for dist, _cell, loc_idx, level, ref_key in ranked[:k]:
            wanted.setdefault((level, loc_idx), []).append((dist, ref_key, t_idx))
    grants = set()
    for (level, loc_idx), claims in wanted.items():
        claims.sort()
        grants.add((level, loc_idx, claims[0][2]))
    return grants


def oracle_average_precision(flags, n_gt: int) -> float:
    """AP as max-precision-at-recall tabulation over the TP ranks.

    flags: TP/FP booleans already in rank order. Mathematically equal to
    the area under the monotonized PR curve, derived differently.
    """
    if n_gt == 0:
        return 0.0
    precisions = []
    tp = 0
    for rank, flag in enumerate(flags, start=1):
        tp += int(flag)
        precisions.append((tp / n_gt, tp / rank))
    total = 0.0
    for k in range(1, tp + 1):
        level = k / n_gt
        best = max((p for r, p in precisions if r >= level - 1e-12), default=0.0)
        total += best
    return total / n_gt


def oracle_map(preds_per_scene, gts_per_scene, iou_thr):
    """Independent mAP: explicit per-class matching and PR tabulation."""
    classes = sorted({g.category for scene in gts_per_scene for g in scene})
    aps = {}
    for cls in classes:
        entries = []
        for s_idx, scene_preds in enumerate(preds_per_scene):
            for p in scene_preds:
                if p.category == cls:
                    entries.append((-p.score, tuple(p.box.center), tuple(p.box.size), s_idx, p))
        entries.sort(key=lambda e: e[:3])
        free = [
            [True] * sum(1 for g in scene if g.category == cls) for scene in gts_per_scene
        ]
        gt_boxes = [[g.box for g in scene if g.category == cls] for scene in gts_per_scene]
        flags = []
        for _, _, _, s_idx, pred in entries:
            best_iou, best_j = -1.0, -1
            for j, box in enumerate(gt_boxes[s_idx]):
                if not free[s_idx][j]:
                    continue
                iou = boxes_iou_reference(pred.box, box)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_thr:
                free[s_idx][best_j] = False
                flags.append(True)
            else:
                flags.append(False)
        n_gt = sum(len(b) for b in gt_boxes)
        aps[cls] = oracle_average_precision(flags, n_gt)
    return aps, float(np.mean(list(aps.values())))


def oracle_f1_corner(preds_per_scene, gts_per_scene, dist_thr):
    """Independent corner-matching F1 (score-greedy)."""
    tp = fp = fn = 0
    for scene_preds, scene_gts in zip(preds_per_scene, gts_per_scene):
        order = sorted(
            range(len(scene_preds)),
            key=lambda i: (
                -(scene_preds[i].score if scene_preds[i].score is not None else 0.0),
                tuple(scene_preds[i].corners.reshape(-1)),
            ),
        )
        taken = [False] * len(scene_gts)
        scene_tp = 0
        for i in order:
            best_d, best_j = math.inf, -1
            for j in range(len(scene_gts)):
                if taken[j]:
                    continue
                d = wall_distance_reference(scene_preds[i], scene_gts[j])
                if d < best_d:
                    best_d, best_j = d, j
            if best_j >= 0 and best_d < dist_thr:
                taken[best_j] = True
                scene_tp += 1
        tp += scene_tp
        fp += len(scene_preds) - scene_tp
        fn += taken.count(False)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def shapely_footprint(wall: Wall, thickness: float):
    from shapely.geometry import Polygon

    a = wall.corners[0, :2]
    b = wall.corners[1, :2]
    u = (b - a) / np.linalg.norm(b - a)
    v = np.array([-u[1], u[0]]) * (thickness / 2.0)
    return Polygon([tuple(a - v), tuple(b - v), tuple(b + v), tuple(a + v)])


def shapely_projection_iou(wall_a: Wall, wall_b: Wall, thickness: float) -> float:
    pa = shapely_footprint(wall_a, thickness)
    pb = shapely_footprint(wall_b, thickness)
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return inter / union if union > 0 else 0.0


def oracle_f1_projection(preds_per_scene, gts_per_scene, iou_thr, thickness):
    """Independent projection F1 using shapely polygon intersections."""
    tp = fp = fn = 0
    for scene_preds, scene_gts in zip(preds_per_scene, gts_per_scene):
        order = sorted(
            range(len(scene_preds)),
            key=lambda i: (
                -(scene_preds[i].score if scene_preds[i].score is not None else 0.0),
                tuple(scene_preds[i].corners.reshape(-1)),
            ),
        )
        taken = [False] * len(scene_gts)
        scene_tp = 0
        for i in order:
            best_iou, best_j = 0.0, -1
            for j in range(len(scene_gts)):
                if taken[j]:
                    continue
                iou = shapely_projection_iou(scene_preds[i], scene_gts[j], thickness)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_thr:
                taken[best_j] = True
                scene_tp += 1
        tp += scene_tp
        fp += len(scene_preds) - scene_tp
        fn += taken.count(False)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
