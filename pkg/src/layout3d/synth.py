"""Seeded synthetic scenes: rooms, furniture boxes, and surface point clouds.

Rooms are rectangular (4 walls) or L-shaped (6 walls, one concave corner),
always floor-aligned with a common wall height. Objects are axis-aligned
boxes resting on the floor, placed with rejection sampling so they stay
inside the footprint, clear of walls, and disjoint from each other (the
closed-loop self-test needs NMS to never merge two true objects). Points
are sampled on floor, wall, and box surfaces at a configurable density
with optional Gaussian noise. Everything is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import PlacementFailure
from .geometry import Box3, DetectedObject, PointCloud, Scene, canonicalize_wall

ROOM_TYPES = ("rectangular", "lshaped")

DEFAULT_CATEGORIES = {1: "chair", 2: "table", 3: "sofa"}
# small furniture handled on the fine grid, large on the coarse one
DEFAULT_CATEGORY_LEVEL_NAMES = {"chair": 16, "table": 32, "sofa": 32}

_SURFACE_COLORS = {
    "floor": (128.0, 128.0, 128.0),
    "wall": (220.0, 220.0, 220.0),
    1: (200.0, 60.0, 60.0),
    2: (60.0, 200.0, 60.0),
    3: (60.0, 60.0, 200.0),
}

_WALL_CLEARANCE = 0.05  # m between an object and any wall
_MAX_PLACEMENT_ATTEMPTS = 1000
_MIN_WALL_RUN = 1.0  # m, keeps distinct walls separable under corner NMS


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the scene generator; all lengths in meters."""

    seed: int = 0
    room_type: str = "rectangular"
    width_range: tuple[float, float] = (3.0, 6.0)
    depth_range: tuple[float, float] = (3.0, 6.0)
    height_range: tuple[float, float] = (2.4, 3.0)
    object_count_range: tuple[int, int] = (2, 6)
    object_size_range: tuple[float, float] = (0.4, 1.2)
    point_density: float = 100.0  # points per m^2 of surface
    noise_sigma: float = 0.0  # m

    def __post_init__(self):
        if self.room_type not in ROOM_TYPES:
            raise ValueError(f"room_type must be one of {ROOM_TYPES}, got {self.room_type!r}")
        for name in ("width_range", "depth_range", "height_range", "object_size_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be a nonempty positive range, got ({lo}, {hi})")
        lo, hi = self.object_count_range
        if not (0 <= lo <= hi):
            raise ValueError(f"object_count_range must be nonempty, got ({lo}, {hi})")
        if not self.point_density > 0:
            raise ValueError("point_density must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.room_type == "lshaped" and self.width_range[0] < 2 * _MIN_WALL_RUN:
            raise ValueError("L-shaped rooms need width/depth of at least two wall runs")

    def with_seed(self, seed: int) -> "SynthConfig":
        return replace(self, seed=seed)


def _footprint(cfg: SynthConfig, rng: np.random.Generator):
    """Room outline as (vertices, covering rectangles, optional notch)."""
    width = rng.uniform(*cfg.width_range)
    depth = rng.uniform(*cfg.depth_range)
    if cfg.room_type == "rectangular":
        verts = np.array([(0, 0), (width, 0), (width, depth), (0, depth)], dtype=np.float64)
        rects = [((0.0, 0.0), (width, depth))]
        return verts, rects, None
    notch_w = rng.uniform(_MIN_WALL_RUN, width - _MIN_WALL_RUN)
    notch_d = rng.uniform(_MIN_WALL_RUN, depth - _MIN_WALL_RUN)
    verts = np.array(
        [
            (0, 0),
            (width, 0),
            (width, depth - notch_d),
            (width - notch_w, depth - notch_d),
            (width - notch_w, depth),
            (0, depth),
        ],
        dtype=np.float64,
    )
    rects = [
        ((0.0, 0.0), (width, depth - notch_d)),
        ((0.0, depth - notch_d), (width - notch_w, depth)),
    ]
    notch = ((width - notch_w, depth - notch_d), (width, depth))
    return verts, rects, notch


def _box_fits(lo, hi, rects, notch) -> bool:
    """Axis-aligned xy extent fully inside the footprint."""
    outer_lo = np.min([r[0] for r in rects], axis=0)
    outer_hi = np.max([r[1] for r in rects], axis=0)
    if (lo < outer_lo).any() or (hi > outer_hi).any():
        return False
    if notch is None:
        return True
    (nx0, ny0), (nx1, ny1) = notch
    return not (hi[0] > nx0 and hi[1] > ny0 and lo[0] < nx1 and lo[1] < ny1)


def _boxes_disjoint(center, size, placed) -> bool:
    for other in placed:
        gap = np.abs(center - other.center) - (size + other.size) / 2.0
        if (gap < 0).all():
            return False
    return True


def _sample_rect_counts(rng, rects, density):
    areas = [np.prod(np.asarray(hi) - np.asarray(lo)) for lo, hi in rects]
    return [max(1, math.ceil(density * a)) for a in areas]


def generate_scene(cfg: SynthConfig) -> Scene:
    """Build one deterministic scene from the config seed."""
    rng = np.random.default_rng(cfg.seed)
    verts, rects, notch = _footprint(cfg, rng)
    height = rng.uniform(*cfg.height_range)

    walls = []
    for i in range(len(verts)):
        a = np.array([*verts[i], 0.0])
        b = np.array([*verts[(i + 1) % len(verts)], 0.0])
        lift = np.array([0.0, 0.0, height])
        walls.append(canonicalize_wall([a, b, b + lift, a + lift], score=1.0))

    count = int(rng.integers(cfg.object_count_range[0], cfg.object_count_range[1] + 1))
    objects: list[DetectedObject] = []
    outer_lo = np.min([r[0] for r in rects], axis=0)
    outer_hi = np.max([r[1] for r in rects], axis=0)
    for _ in range(count):
        for attempt in range(_MAX_PLACEMENT_ATTEMPTS):
            size = rng.uniform(cfg.object_size_range[0], cfg.object_size_range[1], size=3)
            size[2] = min(size[2], 0.9 * height)
            cx = rng.uniform(outer_lo[0], outer_hi[0])
            cy = rng.uniform(outer_lo[1], outer_hi[1])
            center = np.array([cx, cy, size[2] / 2.0])
            lo = center[:2] - size[:2] / 2.0 - _WALL_CLEARANCE
            hi = center[:2] + size[:2] / 2.0 + _WALL_CLEARANCE
            if not _box_fits(lo, hi, rects, notch):
                continue
            if not _boxes_disjoint(center, size, [o.box for o in objects]):
                continue
            category = int(rng.integers(1, len(DEFAULT_CATEGORIES) + 1))
            objects.append(DetectedObject(box=Box3(center=center, size=size), category=category))
            break
        else:
            raise PlacementFailure(
                f"could not place object {len(objects)} in {_MAX_PLACEMENT_ATTEMPTS} attempts"
            )

    xyz_parts, rgb_parts = [], []

    def add_points(pts: np.ndarray, color) -> None:
        xyz_parts.append(pts)
        rgb_parts.append(np.tile(np.asarray(color, dtype=np.float64), (len(pts), 1)))

    # floor: uniform over the covering rectangles
    for (lo, hi), n in zip(rects, _sample_rect_counts(rng, rects, cfg.point_density)):
        uv = rng.uniform(size=(n, 2))
        xy = np.asarray(lo) + uv * (np.asarray(hi) - np.asarray(lo))
        add_points(np.hstack([xy, np.zeros((n, 1))]), _SURFACE_COLORS["floor"])

    # walls: uniform over each rectangle
    for wall in walls:
        la, lb = wall.corners[0], wall.corners[1]
        length = float(np.linalg.norm(lb - la))
        n = max(1, math.ceil(cfg.point_density * length * height))
        u = rng.uniform(size=(n, 1))
        w = rng.uniform(size=(n, 1))
        pts = la[None, :] + u * (lb - la)[None, :] + w * np.array([[0.0, 0.0, height]])
        add_points(pts, _SURFACE_COLORS["wall"])

    # boxes: six faces each
    for obj in objects:
        lo3, hi3 = obj.box.lo, obj.box.hi
        size3 = obj.box.size
        for axis in range(3):
            others = [k for k in range(3) if k != axis]
            face_area = float(size3[others[0]] * size3[others[1]])
            n = max(1, math.ceil(cfg.point_density * face_area))
            for side_val in (lo3[axis], hi3[axis]):
                pts = np.empty((n, 3))
                pts[:, axis] = side_val
                for k in others:
                    pts[:, k] = rng.uniform(lo3[k], hi3[k], size=n)
                add_points(pts, _SURFACE_COLORS[obj.category])

    xyz = np.vstack(xyz_parts)
    if cfg.noise_sigma > 0:
        xyz = xyz + rng.normal(0.0, cfg.noise_sigma, size=xyz.shape)
    cloud = PointCloud.from_arrays(xyz, np.vstack(rgb_parts))
    return Scene(cloud=cloud, objects=tuple(objects), walls=tuple(walls), categories=DEFAULT_CATEGORIES)


def perturb(scene: Scene, sigma_center: float, sigma_corner: float, seed: int = 0) -> Scene:
    """Jitter object centers and wall shapes while keeping walls valid.

    Wall jitter acts in parameter space: the two lower corners move in the
    floor plane and the height scalar is perturbed, so side edges stay
    vertical. Lower-corner heights are untouched.
    """
    if sigma_center < 0 or sigma_corner < 0:
        raise ValueError("jitter sigmas must be >= 0")
    if sigma_center == 0 and sigma_corner == 0:
        return scene
    rng = np.random.default_rng(seed)

    objects = []
    for obj in scene.objects:
        center = obj.box.center + rng.normal(0.0, sigma_center, size=3)
        objects.append(
            DetectedObject(box=Box3(center=center, size=obj.box.size), category=obj.category, score=obj.score)
        )

    walls = []
    for wall in scene.walls:
        la, lb = wall.corners[0].copy(), wall.corners[1].copy()
        height = float(wall.corners[3, 2] - wall.corners[0, 2])
        for _ in range(100):
            la_xy = la[:2] + rng.normal(0.0, sigma_corner, size=2)
            lb_xy = lb[:2] + rng.normal(0.0, sigma_corner, size=2)
            new_h = max(height + rng.normal(0.0, sigma_corner), 0.05)
            if np.linalg.norm(la_xy - lb_xy) > 1e-3:
                break
        new_la = np.array([*la_xy, la[2]])
        new_lb = np.array([*lb_xy, lb[2]])
        lift = np.array([0.0, 0.0, new_h])
        walls.append(
            canonicalize_wall([new_la, new_lb, new_lb + lift, new_la + lift], score=wall.score)
        )

    return Scene(cloud=scene.cloud, objects=tuple(objects), walls=tuple(walls), categories=scene.categories)
