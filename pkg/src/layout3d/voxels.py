"""Point-cloud voxelization, grid hierarchy, BEV pooling, height profiles.

Grids are sparse: only occupied cells are stored, as lexicographically
sorted integer indices with one feature vector and a point count per cell.
Cells are half-open with floor indexing: ``index = floor((p - origin) / size)``.
The grid hierarchy (8 / 16 / 32 / 64 cm) is produced by index coarsening,
which models the geometric skeleton of a strided sparse backbone without
any learned filters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyCloud, EmptyGrid
from .geometry import PointCloud

DEFAULT_VOXEL_SIZE = 0.02  # m
DEFAULT_MAX_POINTS = 100_000
PROFILE_WIDTH = 10  # z-quantiles fed to the height encoder
HEIGHT_CODE_WIDTH = 40  # channels appended to BEV features


def _lex_order(indices: np.ndarray) -> np.ndarray:
    """Permutation sorting integer index rows lexicographically."""
    return np.lexsort(tuple(indices[:, k] for k in range(indices.shape[1] - 1, -1, -1)))


@dataclass(frozen=True)
class VoxelGrid:
    """Sparse 3D grid: per-cell mean feature and point count."""

    size: float
    origin: np.ndarray  # (3,)
    indices: np.ndarray  # (M, 3) int64, lexicographically sorted
    features: np.ndarray  # (M, D)
    counts: np.ndarray  # (M,) points merged into each cell

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("voxel size must be positive")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64).reshape(-1))
        if not (len(self.indices) == len(self.features) == len(self.counts)):
            raise ValueError("indices, features, and counts must have equal length")

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def as_dict(self) -> dict[tuple[int, int, int], np.ndarray]:
        return {tuple(ix): f for ix, f in zip(map(tuple, self.indices), self.features)}


@dataclass(frozen=True)
class BevGrid:
    """Sparse 2D floor-plane grid produced by pooling voxel columns."""

    size: float
    origin: np.ndarray  # (2,)
    indices: np.ndarray  # (M, 2) int64, lexicographically sorted
    features: np.ndarray  # (M, D)
    counts: np.ndarray  # (M,)

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("cell size must be positive")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(2))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64).reshape(-1))

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def as_dict(self) -> dict[tuple[int, int], np.ndarray]:
        return {tuple(ix): f for ix, f in zip(map(tuple, self.indices), self.features)}


@dataclass(frozen=True)
class LocationSet:
    """Cell centers of one grid level, with their integer indices."""

    level_cm: int
    points: np.ndarray  # (J, 3) centers, lexicographic cell-index order
    indices: np.ndarray  # (J, 3) int64

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64).reshape(-1, 3))
        if len(self.points) != len(self.indices):
            raise ValueError("points and indices must have equal length")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def floor_projection(self) -> np.ndarray:
        return self.points[:, :2]


@dataclass(frozen=True)
class HeightProfile:
    """Nondecreasing z-quantile values summarizing scene heights."""

    values: np.ndarray  # (K,)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size < 1:
            raise ValueError("height profile needs at least one quantile")
        if np.any(np.diff(values) < 0):
            raise ValueError("quantile values must be nondecreasing")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MlpWeights:
    """Three-layer MLP weights: 10 -> H1 -> H2 -> 40, row-major matrices."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("w1", "w2", "w3"):
            arrays[name] = np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64))
        for name in ("b1", "b2", "b3"):
            arrays[name] = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
        w1, w2, w3 = arrays["w1"], arrays["w2"], arrays["w3"]
        b1, b2, b3 = arrays["b1"], arrays["b2"], arrays["b3"]
        if w1.shape[1] != PROFILE_WIDTH:
            raise DimensionMismatch(f"w1 must take {PROFILE_WIDTH} inputs, got {w1.shape[1]}")
        if w3.shape[0] != HEIGHT_CODE_WIDTH:
            raise DimensionMismatch(f"w3 must emit {HEIGHT_CODE_WIDTH} outputs, got {w3.shape[0]}")
        if w2.shape[1] != w1.shape[0] or w3.shape[1] != w2.shape[0]:
            raise DimensionMismatch("layer widths do not chain")
        if b1.shape[0] != w1.shape[0] or b2.shape[0] != w2.shape[0] or b3.shape[0] != w3.shape[0]:
            raise DimensionMismatch("bias widths do not match their layers")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)


def cap_points(cloud: PointCloud, max_points: int = DEFAULT_MAX_POINTS, seed: int = 0) -> PointCloud:
    """Uniformly subsample the cloud to at most ``max_points`` points.

    A no-op when the cloud already fits. The subset is drawn without
    replacement and is deterministic per (cloud, seed); the surviving
    points keep their original relative order.
    """
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    if len(cloud) <= max_points:
        return cloud
    rng = np.random.default_rng(seed)
    keep = rng.choice(len(cloud), size=max_points, replace=False)
    keep.sort()
    return PointCloud(cloud.data[keep])


def voxelize(cloud: PointCloud, size: float = DEFAULT_VOXEL_SIZE, origin=None) -> VoxelGrid:
    """Bucket points into half-open cells; feature = mean (r, g, b) per cell.

    The origin defaults to the componentwise minimum of the cloud and is
    stored on the grid so downstream levels stay aligned.
    """
    if not size > 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        raise EmptyCloud("cannot voxelize an empty cloud")
    xyz = cloud.xyz
    origin = xyz.min(axis=0) if origin is None else np.asarray(origin, dtype=np.float64).reshape(3)
    idx = np.floor((xyz - origin) / size).astype(np.int64)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq))
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, cloud.rgb)
    return VoxelGrid(size=size, origin=origin, indices=uniq, features=sums / counts[:, None], counts=counts)


def coarsen(grid: VoxelGrid, factor: int = 2) -> VoxelGrid:
    """Merge cells into parents at ``factor`` times the voxel size.

    Parent index is ``floor(index / factor)``; features merge by
    count-weighted mean, so color mass and point counts are conserved.
    """
    if int(factor) != factor or factor < 2:
        raise ValueError("coarsening factor must be an integer >= 2")
    parent = np.floor_divide(grid.indices, factor)
    uniq, inverse = np.unique(parent, axis=0, return_inverse=True)
    counts = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(counts, inverse, grid.counts)
    sums = np.zeros((len(uniq), grid.channels))
    np.add.at(sums, inverse, grid.features * grid.counts[:, None])
    return VoxelGrid(
        size=grid.size * factor,
        origin=grid.origin,
        indices=uniq,
        features=sums / counts[:, None],
        counts=counts,
    )


def locations(grid: VoxelGrid) -> LocationSet:
    """Centers of all occupied cells, in stable lexicographic index order."""
    if len(grid) == 0:
        raise EmptyGrid("grid has no occupied cells")
    centers = grid.origin[None, :] + (grid.indices + 0.5) * grid.size
    return LocationSet(level_cm=round(grid.size * 100), points=centers, indices=grid.indices)


def bev_pool(grid: VoxelGrid) -> BevGrid:
    """Average-pool voxel columns onto the floor plane.

    Cells sharing (ix, iy) merge with a count-weighted feature mean;
    counts are summed, so total point count is conserved.
    """
    if len(grid) == 0:
        raise EmptyGrid("grid has no occupied cells")
    cols = grid.indices[:, :2]
    uniq, inverse = np.unique(cols, axis=0, return_inverse=True)
    counts = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(counts, inverse, grid.counts)
    sums = np.zeros((len(uniq), grid.channels))
    np.add.at(sums, inverse, grid.features * grid.counts[:, None])
    return BevGrid(
        size=grid.size,
        origin=grid.origin[:2],
        indices=uniq,
        features=sums / counts[:, None],
        counts=counts,
    )


def z_quantiles(cloud: PointCloud, k: int = PROFILE_WIDTH) -> HeightProfile:
    """Height profile: z-quantiles at midpoint probabilities (i + 0.5) / k.

    Quantiles use linear interpolation of the sorted z values; midpoint
    probabilities avoid the degenerate min/max endpoints.
    """
    if k < 1:
        raise ValueError("quantile count must be >= 1")
    if len(cloud) == 0:
        raise EmptyCloud("cannot take quantiles of an empty cloud")
    probs = (np.arange(k) + 0.5) / k
    return HeightProfile(values=np.quantile(cloud.xyz[:, 2], probs, method="linear"))


def mlp_forward(profile: HeightProfile, weights: MlpWeights) -> np.ndarray:
    """Encode a height profile through the three-layer ReLU MLP."""
    x = profile.values
    if x.shape[0] != weights.w1.shape[1]:
        raise DimensionMismatch(
            f"profile has {x.shape[0]} values, encoder expects {weights.w1.shape[1]}"
        )
    h1 = np.maximum(weights.w1 @ x + weights.b1, 0.0)
    h2 = np.maximum(weights.w2 @ h1 + weights.b2, 0.0)
    return weights.w3 @ h2 + weights.b3


def concat_height(bev: BevGrid, height_code: np.ndarray) -> BevGrid:
    """Append the scene-level height code to every BEV cell feature."""
    code = np.asarray(height_code, dtype=np.float64).reshape(-1)
    tiled = np.tile(code, (len(bev), 1))
    return BevGrid(
        size=bev.size,
        origin=bev.origin,
        indices=bev.indices,
        features=np.hstack([bev.features, tiled]) if len(bev) else tiled.reshape(0, bev.channels + code.size),
        counts=bev.counts,
    )
