"""Encode walls into fixed-arity parameter vectors and decode them back.

Four schemes are supported, addressable by stable string ids:

================  =======  ==========================================
scheme id         params   contents (flat vector layout)
================  =======  ==========================================
``pq``            8        center offset (3), length, height, normal (3)
``corners4``      12       four 3D corner offsets, canonical order
``lower2h``       7        two 3D lower-corner offsets + height
``bev2h``         5        two 2D lower-corner offsets + height
================  =======  ==========================================

All offsets are relative to an anchor location (a 3-vector, or its floor
projection for ``bev2h``). Every decode canonicalizes and validates the
resulting wall; every encode is the exact inverse of its decode for walls
that satisfy the scheme's assumptions (vertical for all; horizontal lower
edge for ``pq``; lower corners on z = 0 for ``bev2h``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatch, DegenerateNormal, DegenerateWall, FloorMisaligned
from .geometry import UP, Wall, as_vec3, canonicalize_wall, wall_geometry

SCHEMES = ("pq", "corners4", "lower2h", "bev2h")

_PARAM_COUNTS = {"pq": 8, "corners4": 12, "lower2h": 7, "bev2h": 5}

_MIN_HORIZONTAL_NORMAL = 1e-9  # below this the normal has no usable direction
_MIN_CORNER_SEPARATION = 1e-6  # m


def param_count(scheme: str) -> int:
    """Number of regression parameters of a scheme (8 / 12 / 7 / 5)."""
    try:
        return _PARAM_COUNTS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None


def _check_arity(scheme: str, vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    want = param_count(scheme)
    if vector.shape[0] != want:
        raise ArityMismatch(f"scheme {scheme!r} takes {want} parameters, got {vector.shape[0]}")
    if not np.isfinite(vector).all():
        raise DegenerateWall("parameter vector contains non-finite values")
    return vector


@dataclass(frozen=True)
class PqParams:
    """Center offset + length + height + normal (8 values)."""

    delta_t: np.ndarray  # (3,) offset anchor -> wall center
    length: float
    height: float
    normal: np.ndarray  # (3,) plane normal; decode normalizes

    def __post_init__(self):
        object.__setattr__(self, "delta_t", as_vec3(self.delta_t))
        object.__setattr__(self, "normal", as_vec3(self.normal))
        if not (self.length > 0 and self.height > 0):
            raise DegenerateWall("pq length and height must be positive")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.delta_t, [self.length, self.height], self.normal])

    @classmethod
    def from_vector(cls, v) -> "PqParams":
        v = _check_arity("pq", v)
        return cls(delta_t=v[:3], length=float(v[3]), height=float(v[4]), normal=v[5:])


@dataclass(frozen=True)
class Corner4Params:
    """Offsets to all four corners, canonical order (12 values)."""

    offsets: np.ndarray  # (4, 3)

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (4, 3):
            raise ValueError(f"corner offsets must be (4, 3), got {offsets.shape}")
        object.__setattr__(self, "offsets", offsets)

    def to_vector(self) -> np.ndarray:
        return self.offsets.reshape(-1).copy()

    @classmethod
    def from_vector(cls, v) -> "Corner4Params":
        return cls(offsets=_check_arity("corners4", v).reshape(4, 3))


@dataclass(frozen=True)
class Lower2HParams:
    """Offsets to both lower corners + relative height (7 values)."""

    offsets: np.ndarray  # (2, 3)
    delta_h: float

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (2, 3):
            raise ValueError(f"lower offsets must be (2, 3), got {offsets.shape}")
        object.__setattr__(self, "offsets", offsets)
        if not self.delta_h > 0:
            raise DegenerateWall("relative height must be positive")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.offsets.reshape(-1), [self.delta_h]])

    @classmethod
    def from_vector(cls, v) -> "Lower2HParams":
        v = _check_arity("lower2h", v)
        return cls(offsets=v[:6].reshape(2, 3), delta_h=float(v[6]))


@dataclass(frozen=True)
class Bev2HParams:
    """Floor-plane offsets to both lower corners + height (5 values)."""

    offsets: np.ndarray  # (2, 2) in the floor plane
    height: float

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.shape != (2, 2):
            raise ValueError(f"bev offsets must be (2, 2), got {offsets.shape}")
        object.__setattr__(self, "offsets", offsets)
        if not self.height > 0:
            raise DegenerateWall("height must be positive")
        if float(np.linalg.norm(offsets[0] - offsets[1])) <= _MIN_CORNER_SEPARATION:
            raise DegenerateWall("lower-corner offsets coincide")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.offsets.reshape(-1), [self.height]])

    @classmethod
    def from_vector(cls, v) -> "Bev2HParams":
        v = _check_arity("bev2h", v)
        return cls(offsets=v[:4].reshape(2, 2), height=float(v[4]))


def decode_pq(anchor, params: PqParams) -> Wall:
    """Rebuild a wall from center offset, length, height, and normal.

    The normal is normalized and its vertical component projected out, so
    decoding is invariant to positive scaling of the regressed normal.
    """
    anchor = as_vec3(anchor)
    nx, ny = float(params.normal[0]), float(params.normal[1])
    norm = math.hypot(nx, ny)
    if norm <= _MIN_HORIZONTAL_NORMAL:
        raise DegenerateNormal("normal has no horizontal component")
    # unit in-wall direction on the floor plane: normalized horizontal normal x up
    direction = np.array([ny / norm, -nx / norm, 0.0])
    center = anchor + params.delta_t
    half_l = 0.5 * params.length * direction
    half_h = 0.5 * params.height * UP
    corners = np.array(
        [
            center - half_l - half_h,
            center + half_l - half_h,
            center + half_l + half_h,
            center - half_l + half_h,
        ]
    )
    return canonicalize_wall(corners)


def encode_pq(wall: Wall, anchor) -> PqParams:
    """Inverse of :func:`decode_pq` for walls with a horizontal lower edge."""
    wall = canonicalize_wall(wall.corners)
    anchor = as_vec3(anchor)
    geo = wall_geometry(wall)
    return PqParams(
        delta_t=geo.center - anchor, length=geo.length, height=geo.height, normal=geo.normal
    )


def decode_corners4(anchor, params: Corner4Params) -> Wall:
    """Rebuild a wall from four absolute corner offsets."""
    anchor = as_vec3(anchor)
    return canonicalize_wall(anchor[None, :] + params.offsets)


def encode_corners4(wall: Wall, anchor) -> Corner4Params:
    """Offsets from the anchor to the canonical corners; exact inverse."""
    wall = canonicalize_wall(wall.corners)
    anchor = as_vec3(anchor)
    return Corner4Params(offsets=wall.corners - anchor[None, :])


def decode_lower2h(anchor, params: Lower2HParams) -> Wall:
    """Rebuild a wall from two lower-corner offsets lifted by a height."""
    anchor = as_vec3(anchor)
    lower = anchor[None, :] + params.offsets
    if float(np.linalg.norm(lower[0] - lower[1])) <= _MIN_CORNER_SEPARATION:
        raise DegenerateWall("decoded lower corners coincide")
    lift = params.delta_h * UP
    corners = np.array([lower[0], lower[1], lower[1] + lift, lower[0] + lift])
    return canonicalize_wall(corners)


def encode_lower2h(wall: Wall, anchor) -> Lower2HParams:
    """Lower-corner offsets + vertical-edge height; exact inverse."""
    wall = canonicalize_wall(wall.corners)
    anchor = as_vec3(anchor)
    height = wall_geometry(wall).height
    return Lower2HParams(offsets=wall.corners[:2] - anchor[None, :], delta_h=height)


def _as_vec2(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {v.shape}")
    return v


def decode_bev(anchor_uv, params: Bev2HParams) -> Wall:
    """Rebuild a floor-aligned wall from floor-plane corner offsets."""
    anchor_uv = _as_vec2(anchor_uv)
    lower_uv = anchor_uv[None, :] + params.offsets
    lower = np.hstack([lower_uv, np.zeros((2, 1))])
    lift = params.height * UP
    corners = np.array([lower[0], lower[1], lower[1] + lift, lower[0] + lift])
    return canonicalize_wall(corners)


def encode_bev(wall: Wall, anchor_uv) -> Bev2HParams:
    """Floor-plane offsets + height; requires lower corners on z = 0."""
    wall = canonicalize_wall(wall.corners)
    anchor_uv = _as_vec2(anchor_uv)
    lower_z = wall.corners[:2, 2]
    if np.abs(lower_z).max() > _MIN_CORNER_SEPARATION:
        raise FloorMisaligned(
            f"lower corners sit at z = {lower_z.tolist()}, expected the z = 0 floor plane"
        )
    height = wall_geometry(wall).height
    return Bev2HParams(offsets=wall.corners[:2, :2] - anchor_uv[None, :], height=height)


def _bev_anchor(anchor) -> np.ndarray:
    anchor = np.asarray(anchor, dtype=np.float64).reshape(-1)
    if anchor.shape[0] not in (2, 3):
        raise ValueError(f"anchor must be a 2- or 3-vector, got shape {anchor.shape}")
    return anchor[:2]


def encode_params(scheme: str, wall: Wall, anchor) -> np.ndarray:
    """Encode a wall under a scheme into its flat parameter vector."""
    if scheme == "pq":
        return encode_pq(wall, anchor).to_vector()
    if scheme == "corners4":
        return encode_corners4(wall, anchor).to_vector()
    if scheme == "lower2h":
        return encode_lower2h(wall, anchor).to_vector()
    if scheme == "bev2h":
        return encode_bev(wall, _bev_anchor(anchor)).to_vector()
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def decode_params(scheme: str, anchor, vector) -> Wall:
    """Decode a flat parameter vector under a scheme into a wall."""
    if scheme == "pq":
        return decode_pq(anchor, PqParams.from_vector(vector))
    if scheme == "corners4":
        return decode_corners4(anchor, Corner4Params.from_vector(vector))
    if scheme == "lower2h":
        return decode_lower2h(anchor, Lower2HParams.from_vector(vector))
    if scheme == "bev2h":
        return decode_bev(_bev_anchor(anchor), Bev2HParams.from_vector(vector))
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
