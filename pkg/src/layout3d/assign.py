"""Training-time pairing of grid locations with ground-truth targets.

Each target claims its k nearest candidate locations (Euclidean distance
to a reference point: box center for objects, wall center or lower-edge
midpoint for walls). A location claimed by several targets is granted to
the one with the nearest reference point and the losers take no
replacement, so the result is independent of input ordering. All distance
ties break on the lexicographic cell index of the location; ties between
equidistant targets break on the lexicographic reference point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyLevel, UnknownCategory
from .geometry import CategoryLevelMap, DetectedObject, Wall, lower_edge_midpoints, wall_centers
from .voxels import LocationSet

DEFAULT_K = 6  # locations granted per target
WALL_LEVEL_CM = 32  # walls are predicted at the 32 cm level

OBJECT_KIND = "object"
WALL_KIND = "wall"


@dataclass(frozen=True)
class AssignedPair:
    """One granted (location, target) correspondence."""

    location_index: int
    target_index: int
    kind: str  # "object" or "wall"
    level_cm: int


@dataclass(frozen=True)
class Assignment:
    """All granted pairs of one assignment pass."""

    pairs: tuple[AssignedPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        seen = set()
        for p in self.pairs:
            key = (p.location_index, p.level_cm, p.kind)
            if key in seen:
                raise ValueError(f"location {key} granted twice")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def for_target(self, target_index: int) -> tuple[AssignedPair, ...]:
        return tuple(p for p in self.pairs if p.target_index == target_index)


def _grant(
    per_target: Sequence[tuple[int, LocationSet, np.ndarray, tuple]],
    k: int,
    kind: str,
) -> Assignment:
    """Shared selection + conflict resolution.

    per_target rows: (target_index, candidate locations, distances to the
    target's reference point, reference key for deterministic conflicts).
    """
    claims: dict[tuple[int, int], list] = {}
    for t_idx, locs, dists, ref_key in per_target:
        idx = locs.indices
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], dists))
        for loc_idx in order[:k]:
            loc_idx = int(loc_idx)
            key = (locs.level_cm, loc_idx)
            claims.setdefault(key, []).append((float(dists[loc_idx]), ref_key, t_idx))

    pairs = []
    for (level_cm, loc_idx), claimants in claims.items():
        _, _, winner = min(claimants)
        pairs.append(AssignedPair(loc_idx, winner, kind, level_cm))
    pairs.sort(key=lambda p: (p.target_index, p.level_cm, p.location_index))
    return Assignment(tuple(pairs))


def assign_objects(
    levels: Mapping[int, LocationSet],
    objects: Sequence[DetectedObject],
    category_levels: CategoryLevelMap,
    k: int = DEFAULT_K,
) -> Assignment:
    """Grant each object its k nearest locations on its category's level."""
    if k < 1:
        raise ValueError("k must be >= 1")
    per_target = []
    for t_idx, obj in enumerate(objects):
        if obj.category not in category_levels:
            raise UnknownCategory(f"category {obj.category} has no configured level")
        level = category_levels.level_for(obj.category)
        locs = levels.get(level)
        if locs is None or len(locs) == 0:
            raise EmptyLevel(f"level {level} cm has no candidate locations")
        center = obj.box.center
        dists = np.linalg.norm(locs.points - center[None, :], axis=1)
        per_target.append((t_idx, locs, dists, tuple(center)))
    return _grant(per_target, k, OBJECT_KIND)


def assign_walls(
    locations32: LocationSet,
    walls: Sequence[Wall],
    k: int = DEFAULT_K,
    mode: str = "space3d",
) -> Assignment:
    """Grant each wall its k nearest 32 cm locations.

    mode "space3d" measures from the wall center to the 3D location;
    mode "bev" measures from the lower-edge midpoint to the location's
    floor projection.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if mode not in ("space3d", "bev"):
        raise ValueError(f"mode must be 'space3d' or 'bev', got {mode!r}")
    if walls and len(locations32) == 0:
        raise EmptyLevel("wall level has no candidate locations")
    if mode == "space3d":
        refs = wall_centers(walls)
        cand = locations32.points
    else:
        refs = lower_edge_midpoints(walls)
        cand = locations32.floor_projection
    per_target = []
    for t_idx in range(len(walls)):
        dists = np.linalg.norm(cand - refs[t_idx][None, :], axis=1)
        per_target.append((t_idx, locations32, dists, tuple(refs[t_idx])))
    return _grant(per_target, k, WALL_KIND)
