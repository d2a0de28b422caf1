"""Core scene types: points, boxes, walls, and their geometric derivations.

Conventions used throughout the toolkit:

- the global up axis is +z; the floor plane is z = 0;
- a wall is a vertical planar quad stored as four corners in canonical
  order (lower-A, lower-B, upper-B, upper-A), where lower-A is the lower
  corner with the lexicographically smaller (x, y);
- the wall normal is the unit horizontal vector ``edge x up`` for the
  lower edge running lower-A -> lower-B.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateWall, NonVerticalWall

UP = np.array([0.0, 0.0, 1.0])

COPLANAR_TOL = 1e-6  # m
VERTICAL_TOL = 1e-6  # rad
EDGE_TOL = 1e-6  # m

# feature levels (cm) at which heads operate; categories map to one of these
OBJECT_LEVELS = (16, 32)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


class Point(NamedTuple):
    """A single colored point: coordinates in meters, color in [0, 255]."""

    x: float
    y: float
    z: float
    r: float = 0.0
    g: float = 0.0
    b: float = 0.0

    def validate(self) -> "Point":
        if not all(math.isfinite(c) for c in self[:3]):
            raise ValueError("point coordinates must be finite")
        if not all(0.0 <= c <= 255.0 for c in self[3:]):
            raise ValueError("color channels must lie in [0, 255]")
        return self


@dataclass(frozen=True)
class PointCloud:
    """Ordered point set stored as an (N, 6) float64 array: x y z r g b."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != 6:
            raise ValueError(f"point cloud must be (N, 6), got {data.shape}")
        if data.size and not np.isfinite(data[:, :3]).all():
            raise ValueError("point coordinates must be finite")
        if data.size and ((data[:, 3:] < 0).any() or (data[:, 3:] > 255).any()):
            raise ValueError("color channels must lie in [0, 255]")
        object.__setattr__(self, "data", _freeze(data))

    @classmethod
    def from_arrays(cls, xyz, rgb=None) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        if rgb is None:
            rgb = np.zeros_like(xyz)
        rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 3)
        return cls(np.hstack([xyz, rgb]))

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def rgb(self) -> np.ndarray:
        return self.data[:, 3:]

    def __len__(self) -> int:
        return self.data.shape[0]

    def point(self, i: int) -> Point:
        return Point(*self.data[i])


@dataclass(frozen=True)
class Box3:
    """Axis-aligned 3D box: center and strictly positive sizes, in meters."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        center = as_vec3(self.center)
        size = as_vec3(self.size)
        if not (np.isfinite(center).all() and np.isfinite(size).all()):
            raise ValueError("box center and size must be finite")
        if (size <= 0).any():
            raise ValueError("box sizes must be strictly positive")
        object.__setattr__(self, "center", _freeze(center))
        object.__setattr__(self, "size", _freeze(size))

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.size / 2.0

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.size / 2.0

    def volume(self) -> float:
        return float(np.prod(self.size))


@dataclass(frozen=True)
class DetectedObject:
    """A categorized, scored axis-aligned box (score 1.0 for ground truth)."""

    box: Box3
    category: int
    score: float = 1.0

    def __post_init__(self):
        if int(self.category) != self.category or self.category < 1:
            raise ValueError("category must be an integer >= 1")
        object.__setattr__(self, "category", int(self.category))
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")


@dataclass(frozen=True)
class Wall:
    """Vertical planar quad with corners in canonical order.

    Corner layout: index 0 = lower-A, 1 = lower-B, 2 = upper-B, 3 = upper-A.
    Construct from arbitrary corner order via :func:`canonicalize_wall`.
    """

    corners: np.ndarray  # (4, 3), canonical order
    score: float | None = None

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=np.float64)
        if corners.shape != (4, 3):
            raise ValueError(f"wall corners must be (4, 3), got {corners.shape}")
        if not np.isfinite(corners).all():
            raise ValueError("wall corners must be finite")
        _validate_wall_corners(corners)
        object.__setattr__(self, "corners", _freeze(corners))
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError("wall score must lie in [0, 1]")

    @property
    def lower_a(self) -> np.ndarray:
        return self.corners[0]

    @property
    def lower_b(self) -> np.ndarray:
        return self.corners[1]

    def with_score(self, score: float) -> "Wall":
        return Wall(self.corners, score)


class WallGeometry(NamedTuple):
    """Derived wall quantities: center, length, height, unit normal."""

    center: np.ndarray
    length: float
    height: float
    normal: np.ndarray


@dataclass(frozen=True)
class Scene:
    """One evaluation unit: cloud + ground-truth objects and walls."""

    cloud: PointCloud
    objects: tuple[DetectedObject, ...] = ()
    walls: tuple[Wall, ...] = ()
    categories: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "categories", dict(self.categories))
        for obj in self.objects:
            if self.categories and obj.category not in self.categories:
                raise ValueError(f"object category {obj.category} not in category table")


@dataclass(frozen=True)
class CategoryLevelMap:
    """Maps each category id to the grid level (cm) whose head handles it."""

    levels: Mapping[int, int]

    def __post_init__(self):
        levels = {int(k): int(v) for k, v in dict(self.levels).items()}
        for cid, lvl in levels.items():
            if lvl not in OBJECT_LEVELS:
                raise ValueError(f"category {cid}: level must be one of {OBJECT_LEVELS}, got {lvl}")
        object.__setattr__(self, "levels", levels)

    def level_for(self, category: int) -> int:
        return self.levels[category]

    def __contains__(self, category: int) -> bool:
        return category in self.levels


def _vec_norm(v) -> float:
    return math.sqrt(float(v[0]) ** 2 + float(v[1]) ** 2 + float(v[2]) ** 2)


def _edge_is_vertical(edge) -> bool:
    """True if the segment points up within VERTICAL_TOL and is non-degenerate."""
    n = _vec_norm(edge)
    if n <= EDGE_TOL or edge[2] <= 0:
        return False
    horiz = math.hypot(float(edge[0]), float(edge[1]))
    return horiz / n < VERTICAL_TOL  # sin(angle) for small angles


def _validate_wall_corners(corners: np.ndarray) -> None:
    """Check Wall invariants for corners already in canonical index layout."""
    la, lb, ub, ua = corners
    edge_a = ua - la
    edge_b = ub - lb
    for edge in (edge_a, edge_b):
        n = _vec_norm(edge)
        if n <= EDGE_TOL:
            raise DegenerateWall(f"vertical edge length {n:g} below tolerance")
        if not _edge_is_vertical(edge):
            raise NonVerticalWall("side edges must be parallel to the up axis")
    if abs(_vec_norm(edge_a) - _vec_norm(edge_b)) > EDGE_TOL:
        raise NonVerticalWall("vertical edges differ in length")
    lower = lb - la
    if _vec_norm(lower) <= EDGE_TOL:
        raise DegenerateWall("lower edge collapses to a point")
    other = ub - la
    plane_n = (
        lower[1] * other[2] - lower[2] * other[1],
        lower[2] * other[0] - lower[0] * other[2],
        lower[0] * other[1] - lower[1] * other[0],
    )
    n = _vec_norm(plane_n)
    if n > 0:
        diag = ua - la
        dist = abs(
            float(diag[0] * plane_n[0] + diag[1] * plane_n[1] + diag[2] * plane_n[2]) / n
        )
        if dist > COPLANAR_TOL:
            raise NonVerticalWall(f"corners deviate from a common plane by {dist:g} m")


_PAIRINGS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))


def canonicalize_wall(corners, score: float | None = None) -> Wall:
    """Reorder four arbitrary corners into a canonical Wall.

    The corners must form a vertical planar quad (two equal-length edges
    parallel to +z). Raises NonVerticalWall when no pairing of the points
    into vertical edges exists, DegenerateWall when the quad collapses.
    Idempotent on already-canonical input.
    """
    pts = np.asarray(corners, dtype=np.float64)
    if pts.shape != (4, 3):
        raise ValueError(f"expected four 3D corners, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("corners must be finite")

    deferred: Exception | None = None
    for pair_a, pair_b in _PAIRINGS:
        ordered = []
        ok = True
        for i, j in (pair_a, pair_b):
            edge = pts[j] - pts[i]
            if _edge_is_vertical(edge):
                ordered.append((pts[i], pts[j]))
            elif _edge_is_vertical(-edge):
                ordered.append((pts[j], pts[i]))
            else:
                ok = False
                break
        if not ok:
            continue
        (lo0, up0), (lo1, up1) = ordered
        if tuple(lo1[:2]) < tuple(lo0[:2]) or (
            tuple(lo1[:2]) == tuple(lo0[:2]) and lo1[2] < lo0[2]
        ):
            lo0, up0, lo1, up1 = lo1, up1, lo0, up0
        try:
            return Wall(np.array([lo0, lo1, up1, up0]), score)
        except (NonVerticalWall, DegenerateWall) as exc:
            deferred = exc

    if deferred is not None:
        raise deferred
    # distinguish flat-degenerate quads from genuinely tilted ones
    heights = pts[:, 2]
    if float(heights.max() - heights.min()) <= EDGE_TOL:
        raise DegenerateWall("quad has no vertical extent")
    raise NonVerticalWall("no corner pairing yields vertical side edges")


def wall_geometry(wall: Wall) -> WallGeometry:
    """Derive (center, length, height, normal) from wall corners.

    center is the corner mean; length the lower-edge norm; height the
    vertical-edge length; normal the unit horizontal vector ``edge x up``
    where edge runs lower-A -> lower-B.
    """
    la, lb, ub, ua = wall.corners
    center = wall.corners.mean(axis=0)
    length = _vec_norm(lb - la)
    height = 0.5 * (_vec_norm(ua - la) + _vec_norm(ub - lb))
    edge = lb - la
    horiz = math.hypot(edge[0], edge[1])
    if horiz <= EDGE_TOL:
        raise DegenerateWall("lower edge has no horizontal extent")
    normal = np.array([edge[1], -edge[0], 0.0]) / horiz
    return WallGeometry(center=_freeze(center), length=length, height=height, normal=_freeze(normal))


def wall_centers(walls: Sequence[Wall]) -> np.ndarray:
    """Corner means of a wall sequence as an (L, 3) array."""
    if not walls:
        return np.zeros((0, 3))
    return np.stack([w.corners.mean(axis=0) for w in walls])


def lower_edge_midpoints(walls: Sequence[Wall]) -> np.ndarray:
    """Floor-plane midpoints of the lower edges, (L, 2)."""
    if not walls:
        return np.zeros((0, 2))
    return np.stack([(w.corners[0, :2] + w.corners[1, :2]) / 2.0 for w in walls])
