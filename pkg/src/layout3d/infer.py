"""Decode raw head outputs into objects/walls and suppress duplicates.

Boxes decode as center = location + offset, size = exp(log-size), with
per-class sigmoid scores. Walls decode through the configured
parameterization scheme; decodes that violate wall invariants are dropped
and counted rather than raised, since regressed parameters can be
arbitrarily bad. Suppression is classic greedy NMS, run separately for
boxes (per class, 3D IoU) and walls (corner distance).
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArityMismatch, DegenerateNormal, DegenerateWall, LengthMismatch, NonVerticalWall
from .geometry import Box3, DetectedObject, Wall
from .losses import _sigmoid, iou3d
from .voxels import LocationSet
from .wall_codec import decode_params, param_count

DEFAULT_SCORE_THR = 0.01
DEFAULT_NMS_IOU = 0.5
DEFAULT_WALL_NMS_DIST = 0.75  # m, same threshold as corner matching

# swaps lower-A <-> lower-B together with their uppers
_END_SWAP = np.array([1, 0, 3, 2])


def _as_points(locs) -> np.ndarray:
    if isinstance(locs, LocationSet):
        return locs.points
    return np.atleast_2d(np.asarray(locs, dtype=np.float64))


def decode_detections(
    locs, logits, delta_t, log_size, score_thr: float = DEFAULT_SCORE_THR
) -> list[DetectedObject]:
    """Decode per-location class logits and box regressions into objects.

    Emits one object for every (location, class) whose sigmoid score
    reaches the threshold; classes are 1-based.
    """
    points = _as_points(locs)
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    delta_t = np.atleast_2d(np.asarray(delta_t, dtype=np.float64))
    log_size = np.atleast_2d(np.asarray(log_size, dtype=np.float64))
    n = points.shape[0]
    if not (logits.shape[0] == delta_t.shape[0] == log_size.shape[0] == n):
        raise LengthMismatch(
            f"got {n} locations, {logits.shape[0]} logit rows, "
            f"{delta_t.shape[0]} offsets, {log_size.shape[0]} log-sizes"
        )
    scores = _sigmoid(logits)
    out: list[DetectedObject] = []
    for j, c in zip(*np.nonzero(scores >= score_thr)):
        box = Box3(center=points[j] + delta_t[j], size=np.exp(log_size[j]))
        out.append(DetectedObject(box=box, category=int(c) + 1, score=float(scores[j, c])))
    return out


class WallDecodeResult(NamedTuple):
    walls: list[Wall]
    dropped: int  # decodes that violated wall invariants


def decode_walls(
    anchors, wall_logits, params, scheme: str, score_thr: float = DEFAULT_SCORE_THR
) -> WallDecodeResult:
    """Decode per-anchor wall logits and parameter rows into scored walls."""
    points = _as_points(anchors)
    wall_logits = np.asarray(wall_logits, dtype=np.float64).reshape(-1)
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    n = points.shape[0]
    if not (wall_logits.shape[0] == params.shape[0] == n):
        raise LengthMismatch(
            f"got {n} anchors, {wall_logits.shape[0]} logits, {params.shape[0]} parameter rows"
        )
    arity = param_count(scheme)
    if n and params.shape[1] != arity:
        raise ArityMismatch(f"scheme {scheme!r} takes {arity} parameters, got {params.shape[1]}")
    scores = _sigmoid(wall_logits)
    walls: list[Wall] = []
    dropped = 0
    for j in range(n):
        if scores[j] < score_thr:
            continue
        try:
            wall = decode_params(scheme, points[j], params[j])
        except (DegenerateWall, DegenerateNormal, NonVerticalWall):
            dropped += 1
            continue
        walls.append(wall.with_score(float(scores[j])))
    return WallDecodeResult(walls=walls, dropped=dropped)


def wall_distance(a: Wall, b: Wall) -> float:
    """Symmetric wall distance: max corresponding-corner distance,
    minimized over the two possible end orderings of one wall."""
    diff_keep = a.corners - b.corners
    diff_swap = a.corners - b.corners[_END_SWAP]
    d_keep = float(np.linalg.norm(diff_keep, axis=1).max())
    d_swap = float(np.linalg.norm(diff_swap, axis=1).max())
    return min(d_keep, d_swap)


def wall_distance_matrix(walls_a: Sequence[Wall], walls_b: Sequence[Wall]) -> np.ndarray:
    """Pairwise wall distances as an (len(a), len(b)) array."""
    if not walls_a or not walls_b:
        return np.zeros((len(walls_a), len(walls_b)))
    a = np.stack([w.corners for w in walls_a])
    b = np.stack([w.corners for w in walls_b])
    d_keep = np.linalg.norm(a[:, None] - b[None, :], axis=-1).max(axis=-1)
    d_swap = np.linalg.norm(a[:, None] - b[None, :, _END_SWAP], axis=-1).max(axis=-1)
    return np.minimum(d_keep, d_swap)


def nms_boxes(dets: Sequence[DetectedObject], iou_thr: float = DEFAULT_NMS_IOU) -> list[DetectedObject]:
    """Greedy per-class NMS; keeps the higher-scored of overlapping boxes.

    Ties in score break on insertion order. Output is sorted by
    descending score (ties again by insertion order).
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    kept: list[int] = []
    suppressed = [False] * len(dets)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if j == i or suppressed[j] or dets[j].category != dets[i].category:
                continue
            if iou3d(dets[i].box, dets[j].box) > iou_thr:
                suppressed[j] = True
    return [dets[i] for i in kept]


def nms_walls(walls: Sequence[Wall], dist_thr: float = DEFAULT_WALL_NMS_DIST) -> list[Wall]:
    """Greedy wall NMS under the corner-distance measure.

    A kept wall suppresses remaining walls closer than ``dist_thr``.
    Walls without a score rank as 0. Output sorted by descending score.
    """

    def score(w: Wall) -> float:
        return w.score if w.score is not None else 0.0

    order = sorted(range(len(walls)), key=lambda i: -score(walls[i]))
    kept: list[int] = []
    suppressed = [False] * len(walls)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if j == i or suppressed[j]:
                continue
            if wall_distance(walls[i], walls[j]) < dist_thr:
                suppressed[j] = True
    return [walls[i] for i in kept]
