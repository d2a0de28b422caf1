"""Benchmark metrics: detection mAP and the two layout F1 variants.

Detection follows the usual pooled-PR protocol: per class, predictions
from all scenes are ranked by score, greedily matched to same-scene
ground truth by highest 3D IoU above the threshold, and AP is the exact
area under the monotonized precision-recall curve. Classes without any
ground-truth instance are excluded from the mean.

Layout F1 comes in two flavors: corner matching (max corresponding-corner
distance under a threshold, 0.75 m by default) and floorplan-projection
matching (exact polygon IoU of thickness-inflated footprint rectangles).
Matching is greedy by descending score for both; ties break on canonical
geometric keys so results are independent of scene and input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoGroundTruth
from .geometry import DetectedObject, Scene, Wall
from .infer import wall_distance_matrix

DETECTION_IOU_THRESHOLDS = (0.25, 0.5)
CORNER_MATCH_THRESHOLD = 0.75  # m
PROJECTION_THICKNESS = 0.10  # m, footprint rectangle width


@dataclass(frozen=True)
class MatchStats:
    """Pooled true/false positives and the derived P/R/F1."""

    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class ClassAP:
    """Average precision of one class, with its PR curve for reporting."""

    ap: float
    n_gt: int
    n_pred: int
    recall: np.ndarray
    precision: np.ndarray


@dataclass(frozen=True)
class MapResult:
    """per-class AP plus their unweighted mean."""

    per_class: dict[int, ClassAP]
    mean_ap: float


@dataclass(frozen=True)
class EvalReport:
    """Full benchmark report; all scores in [0, 1]."""

    detection: dict[float, MapResult]
    corner: MatchStats
    corner_threshold: float
    projection: dict[float, MatchStats]
    projection_thickness: float
    scene_count: int = 0

    @property
    def map_at_25(self) -> float:
        return self.detection[0.25].mean_ap

    @property
    def map_at_50(self) -> float:
        return self.detection[0.5].mean_ap


def _pred_sort_key(obj: DetectedObject):
    return (-obj.score, tuple(obj.box.center), tuple(obj.box.size))


def _wall_sort_key(wall: Wall):
    score = wall.score if wall.score is not None else 0.0
    return (-score, tuple(wall.corners.reshape(-1)))


def _iou_one_to_many(lo, hi, los, his) -> np.ndarray:
    """IoU of one box (lo, hi) against arrays of boxes (N, 3)."""
    inter_dims = np.minimum(hi[None, :], his) - np.maximum(lo[None, :], los)
    inter = np.where((inter_dims > 0).all(axis=1), np.prod(np.clip(inter_dims, 0, None), axis=1), 0.0)
    vol = np.prod(hi - lo)
    vols = np.prod(his - los, axis=1)
    return inter / (vol + vols - inter)


def _detection_scene_flags(
    scene_preds: Sequence[DetectedObject],
    scene_gts: Sequence[DetectedObject],
    iou_thr: float,
) -> dict[int, tuple[int, list[tuple[tuple, int]]]]:
    """Per class: (ground-truth count, [(sort key, tp flag)]) for one scene.

    Matching is greedy over this scene's predictions in canonical score
    order; since ground truth is scene-local, flags pooled over scenes and
    re-sorted by the same key reproduce the global greedy matching.
    """
    classes = {g.category for g in scene_gts} | {p.category for p in scene_preds}
    out: dict[int, tuple[int, list[tuple[tuple, int]]]] = {}
    for cls in classes:
        boxes = [g.box for g in scene_gts if g.category == cls]
        gt_lo = np.array([b.lo for b in boxes]).reshape(-1, 3)
        gt_hi = np.array([b.hi for b in boxes]).reshape(-1, 3)
        gt_free = np.ones(len(boxes), dtype=bool)
        cls_preds = sorted((p for p in scene_preds if p.category == cls), key=_pred_sort_key)
        flags: list[tuple[tuple, int]] = []
        for pred in cls_preds:
            tp = 0
            if gt_lo.shape[0]:
                ious = _iou_one_to_many(pred.box.lo, pred.box.hi, gt_lo, gt_hi)
                ious = np.where(gt_free, ious, -1.0)
                best = int(np.argmax(ious))
                if ious[best] >= iou_thr:
                    gt_free[best] = False
                    tp = 1
            flags.append((_pred_sort_key(pred), tp))
        out[cls] = (len(boxes), flags)
    return out


def _map_from_flags(scene_flags: Sequence[dict]) -> MapResult:
    """Pool per-scene match flags into per-class AP and mAP."""
    totals: dict[int, int] = {}
    pooled: dict[int, list[tuple[tuple, int]]] = {}
    for flags in scene_flags:
        for cls, (n_gt, entries) in flags.items():
            totals[cls] = totals.get(cls, 0) + n_gt
            pooled.setdefault(cls, []).extend(entries)

    classes = sorted(cls for cls, n in totals.items() if n > 0)
    if not classes:
        raise NoGroundTruth("no ground-truth instance in any scene")

    per_class: dict[int, ClassAP] = {}
    for cls in classes:
        entries = sorted(pooled.get(cls, []))
        n_gt = totals[cls]
        tp_flags = np.array([tp for _, tp in entries], dtype=np.int64)
        n_pred = len(entries)
        cum_tp = np.cumsum(tp_flags)
        precision = cum_tp / (np.arange(n_pred) + 1) if n_pred else np.zeros(0)
        recall = cum_tp / n_gt if n_pred else np.zeros(0)
        envelope = np.maximum.accumulate(precision[::-1])[::-1] if n_pred else precision
        # integer TP steps keep the perfect case at exactly 1.0
        ap = float(np.sum(tp_flags * envelope)) / n_gt if n_pred else 0.0
        per_class[cls] = ClassAP(ap=ap, n_gt=n_gt, n_pred=n_pred, recall=recall, precision=precision)

    mean_ap = float(np.mean([c.ap for c in per_class.values()]))
    return MapResult(per_class=per_class, mean_ap=mean_ap)


def map_at(
    preds: Sequence[Sequence[DetectedObject]],
    gts: Sequence[Sequence[DetectedObject]],
    iou_thr: float,
) -> MapResult:
    """Per-class AP and mAP at one IoU threshold.

    preds/gts are parallel per-scene sequences. Per class, predictions are
    pooled over scenes, ranked by score (ties broken by center then size,
    so the result is invariant to scene and input permutations), and
    greedily matched to the unmatched same-scene ground truth with the
    highest IoU >= iou_thr.
    """
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} prediction scenes vs {len(gts)} ground-truth scenes")
    return _map_from_flags(
        [_detection_scene_flags(p, g, iou_thr) for p, g in zip(preds, gts)]
    )


def layout_f1_corner(
    preds: Sequence[Sequence[Wall]],
    gts: Sequence[Sequence[Wall]],
    dist_thr: float = CORNER_MATCH_THRESHOLD,
    match: str = "score",
) -> MatchStats:
    """Layout F1 under corner-distance matching, pooled over scenes.

    match "score": predictions are processed by descending score and each
    takes the nearest unmatched ground-truth wall closer than dist_thr.
    match "distance": candidate pairs are accepted globally by ascending
    distance instead.
    """
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} prediction scenes vs {len(gts)} ground-truth scenes")
    if match not in ("score", "distance"):
        raise ValueError(f"match must be 'score' or 'distance', got {match!r}")

    tp = fp = fn = 0
    for scene_preds, scene_gts in zip(preds, gts):
        dist = wall_distance_matrix(list(scene_preds), list(scene_gts))
        matched_pred = np.zeros(len(scene_preds), dtype=bool)
        matched_gt = np.zeros(len(scene_gts), dtype=bool)
        if match == "score":
            order = sorted(range(len(scene_preds)), key=lambda i: _wall_sort_key(scene_preds[i]))
            for i in order:
                if len(scene_gts) == 0:
                    break
                row = np.where(matched_gt, np.inf, dist[i])
                best = int(np.argmin(row))
                if row[best] < dist_thr:
                    matched_gt[best] = True
                    matched_pred[i] = True
        else:
            pairs = [
                (dist[i, j], _wall_sort_key(scene_preds[i]), j, i)
                for i in range(len(scene_preds))
                for j in range(len(scene_gts))
                if dist[i, j] < dist_thr
            ]
            for d, _, j, i in sorted(pairs):
                if not matched_pred[i] and not matched_gt[j]:
                    matched_pred[i] = True
                    matched_gt[j] = True
        tp += int(matched_pred.sum())
        fp += len(scene_preds) - int(matched_pred.sum())
        fn += len(scene_gts) - int(matched_gt.sum())
    return MatchStats(tp=tp, fp=fp, fn=fn)


def wall_footprint(wall: Wall, thickness: float = PROJECTION_THICKNESS) -> np.ndarray:
    """Floorplan footprint: the lower edge inflated into a (4, 2) rectangle."""
    if not thickness > 0:
        raise ValueError("thickness must be positive")
    a = wall.corners[0, :2]
    b = wall.corners[1, :2]
    u = b - a
    u = u / np.linalg.norm(u)
    v = np.array([-u[1], u[0]]) * (thickness / 2.0)
    return np.array([a - v, b - v, b + v, a + v])


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon, (N, 2)."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: clip a convex polygon by a convex polygon.

    Both polygons are (N, 2) with consistent winding; returns the
    intersection polygon (possibly empty).
    """
    # ensure counterclockwise clipper so "inside" is a consistent half-plane
    cx, cy = clipper[:, 0], clipper[:, 1]
    signed = 0.5 * (np.dot(cx, np.roll(cy, -1)) - np.dot(np.roll(cx, -1), cy))
    if signed < 0:
        clipper = clipper[::-1]
    output = list(subject)
    for k in range(len(clipper)):
        if len(output) < 3:
            return np.zeros((0, 2))
        p1 = clipper[k]
        p2 = clipper[(k + 1) % len(clipper)]
        edge = p2 - p1
        inp = output
        output = []
        values = [
            float(edge[0] * (pt[1] - p1[1]) - edge[1] * (pt[0] - p1[0])) for pt in inp
        ]
        for i in range(len(inp)):
            cur, nxt = inp[i], inp[(i + 1) % len(inp)]
            v_cur, v_nxt = values[i], values[(i + 1) % len(inp)]
            if v_cur >= 0:
                output.append(cur)
            if (v_cur > 0 > v_nxt) or (v_nxt > 0 > v_cur):
                t = v_cur / (v_cur - v_nxt)
                output.append(cur + t * (np.asarray(nxt) - cur))
    return np.asarray(output).reshape(-1, 2)


def projection_iou(wall_a: Wall, wall_b: Wall, thickness: float = PROJECTION_THICKNESS) -> float:
    """IoU of the two walls' thickness-inflated floorplan rectangles."""
    ra = wall_footprint(wall_a, thickness)
    rb = wall_footprint(wall_b, thickness)
    if (ra.max(axis=0) < rb.min(axis=0)).any() or (rb.max(axis=0) < ra.min(axis=0)).any():
        return 0.0
    inter_poly = clip_convex(ra, rb)
    if inter_poly.shape[0] < 3:
        return 0.0
    inter = polygon_area(inter_poly)
    union = polygon_area(ra) + polygon_area(rb) - inter
    return inter / union if union > 0 else 0.0


def layout_f1_projection(
    preds: Sequence[Sequence[Wall]],
    gts: Sequence[Sequence[Wall]],
    iou_thr: float,
    thickness: float = PROJECTION_THICKNESS,
) -> MatchStats:
    """Layout F1 under floorplan projection-IoU matching, pooled over scenes.

    Predictions are processed by descending score; each takes the
    unmatched ground-truth wall with the highest footprint IoU >= iou_thr.
    """
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} prediction scenes vs {len(gts)} ground-truth scenes")
    tp = fp = fn = 0
    for scene_preds, scene_gts in zip(preds, gts):
        matched_pred = np.zeros(len(scene_preds), dtype=bool)
        matched_gt = np.zeros(len(scene_gts), dtype=bool)
        order = sorted(range(len(scene_preds)), key=lambda i: _wall_sort_key(scene_preds[i]))
        for i in order:
            best_iou, best_j = 0.0, -1
            for j in range(len(scene_gts)):
                if matched_gt[j]:
                    continue
                iou = projection_iou(scene_preds[i], scene_gts[j], thickness)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j >= 0 and best_iou >= iou_thr:
                matched_gt[best_j] = True
                matched_pred[i] = True
        tp += int(matched_pred.sum())
        fp += len(scene_preds) - int(matched_pred.sum())
        fn += len(scene_gts) - int(matched_gt.sum())
    return MatchStats(tp=tp, fp=fp, fn=fn)


def _check_category_tables(scenes: Sequence[Scene]) -> None:
    merged: dict[int, str] = {}
    for scene in scenes:
        for cid, name in scene.categories.items():
            if cid in merged and merged[cid] != name:
                raise ValueError(f"category tables disagree on id {cid}: {merged[cid]!r} vs {name!r}")
            merged[cid] = name


def _scene_stats(args):
    """Worker: all per-scene match statistics in one pass (picklable)."""
    pred_scene, gt_scene, corner_thr, match, thickness = args
    det = {
        thr: _detection_scene_flags(pred_scene.objects, gt_scene.objects, thr)
        for thr in DETECTION_IOU_THRESHOLDS
    }
    corner = layout_f1_corner([pred_scene.walls], [gt_scene.walls], corner_thr, match)
    projection = {
        thr: layout_f1_projection([pred_scene.walls], [gt_scene.walls], thr, thickness)
        for thr in DETECTION_IOU_THRESHOLDS
    }
    return det, corner, projection


def _sum_stats(parts: Sequence[MatchStats]) -> MatchStats:
    return MatchStats(
        tp=sum(p.tp for p in parts), fp=sum(p.fp for p in parts), fn=sum(p.fn for p in parts)
    )


def evaluate(
    pred_scenes: Sequence[Scene],
    gt_scenes: Sequence[Scene],
    corner_thr: float = CORNER_MATCH_THRESHOLD,
    match: str = "score",
    thickness: float = PROJECTION_THICKNESS,
    jobs: int = 1,
) -> EvalReport:
    """Run the full benchmark over aligned prediction/ground-truth scenes.

    jobs > 1 spreads the per-scene matching over processes; pooling is an
    associative reduction, so the report is independent of the job count.
    """
    if len(pred_scenes) != len(gt_scenes):
        raise ValueError(f"got {len(pred_scenes)} prediction scenes vs {len(gt_scenes)} ground truth")
    _check_category_tables(list(pred_scenes) + list(gt_scenes))

    work = [(p, g, corner_thr, match, thickness) for p, g in zip(pred_scenes, gt_scenes)]
    if jobs > 1 and len(work) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            stats = list(pool.map(_scene_stats, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        stats = [_scene_stats(w) for w in work]

    detection = {
        thr: _map_from_flags([s[0][thr] for s in stats]) for thr in DETECTION_IOU_THRESHOLDS
    }
    corner = _sum_stats([s[1] for s in stats])
    projection = {
        thr: _sum_stats([s[2][thr] for s in stats]) for thr in DETECTION_IOU_THRESHOLDS
    }
    return EvalReport(
        detection=detection,
        corner=corner,
        corner_threshold=corner_thr,
        projection=projection,
        projection_thickness=thickness,
        scene_count=len(gt_scenes),
    )
