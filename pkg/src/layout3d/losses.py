"""Loss components with analytic gradients.

Four pieces: focal classification loss, DIoU box-regression loss,
elementwise-mean L1 for wall parameters, and the unweighted total that
combines them. Every gradient is exact away from kinks; at kinks
(L1 equality, box-face contact, min/max selection ties) the subgradient 0
is chosen so gradients are finite and deterministic everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch
from .geometry import Box3, DetectedObject, Wall, as_vec3
from .wall_codec import encode_params, param_count

LOG_CLAMP = 1e-12  # p_t is clamped to [LOG_CLAMP, 1 - LOG_CLAMP] before log


@dataclass(frozen=True)
class LossValue:
    """Scalar loss plus flat partials w.r.t. the declared inputs."""

    value: float
    gradient: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=np.float64).reshape(-1))
        if not np.isfinite(self.value):
            raise ValueError("loss value must be finite")


@dataclass(frozen=True)
class TotalLoss(LossValue):
    """Total loss with its per-term breakdown."""

    terms: dict[str, float] = None  # type: ignore[assignment]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _focal_terms(logits, targets, alpha: float, gamma: float):
    """Elementwise focal values and d/d logit, vectorized."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    p = _sigmoid(logits)
    pt = np.where(targets == 1, p, 1.0 - p)
    at = np.where(targets == 1, alpha, 1.0 - alpha)
    ptc = np.clip(pt, LOG_CLAMP, 1.0 - LOG_CLAMP)
    log_ptc = np.log(ptc)
    one_m = 1.0 - pt
    values = -at * one_m**gamma * log_ptc

    if gamma == 0:
        mod_term = np.zeros_like(pt)
    else:
        mod_term = at * gamma * one_m ** (gamma - 1.0) * log_ptc
    in_range = (pt > LOG_CLAMP) & (pt < 1.0 - LOG_CLAMP)
    log_term = np.where(in_range, at * one_m**gamma / ptc, 0.0)
    d_pt = mod_term - log_term
    dpt_dx = np.where(targets == 1, 1.0, -1.0) * p * (1.0 - p)
    return values, d_pt * dpt_dx


def focal_loss(logit: float, target: int, alpha: float = 0.25, gamma: float = 2.0) -> LossValue:
    """Focal loss of a single logit against a binary target.

    value = -alpha_t (1 - p_t)^gamma * ln(p_t) with p = sigmoid(logit);
    gradient is w.r.t. the logit.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if target not in (0, 1):
        raise ValueError("target must be 0 or 1")
    values, grads = _focal_terms(np.array([logit]), np.array([target]), alpha, gamma)
    return LossValue(value=float(values[0]), gradient=grads)


def iou3d(a: Box3, b: Box3) -> float:
    """Axis-aligned 3D intersection-over-union, in [0, 1]."""
    overlap = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    if (overlap <= 0).any():
        return 0.0
    inter = float(np.prod(overlap))
    return inter / (a.volume() + b.volume() - inter)


def diou_loss(delta_t, log_size, anchor, gt: Box3) -> LossValue:
    """DIoU loss of a raw (center offset, log-size) prediction.

    The box decodes as center = anchor + delta_t, size = exp(log_size).
    value = 1 - IoU + rho^2 / c^2, where rho is the center distance and c
    the diagonal of the minimal axis-aligned box enclosing both boxes.
    gradient is w.r.t. the six raw parameters (delta_t, log_size).
    """
    delta_t = as_vec3(delta_t)
    log_size = as_vec3(log_size)
    anchor = as_vec3(anchor)
    t = anchor + delta_t
    s = np.exp(log_size)
    lo_p, hi_p = t - s / 2.0, t + s / 2.0
    lo_g, hi_g = gt.lo, gt.hi

    hi = np.minimum(hi_p, hi_g)
    lo = np.maximum(lo_p, lo_g)
    overlap = hi - lo
    vol_p = float(np.prod(s))
    vol_g = gt.volume()
    if (overlap > 0).all():
        v_int = float(np.prod(overlap))
        prod_other = v_int / overlap
        d_hi = (hi_p < hi_g).astype(np.float64)
        d_lo = (lo_p > lo_g).astype(np.float64)
        dvint_dt = prod_other * (d_hi - d_lo)
        dvint_ds = prod_other * 0.5 * (d_hi + d_lo)
    else:
        v_int = 0.0
        dvint_dt = np.zeros(3)
        dvint_ds = np.zeros(3)

    union = vol_p + vol_g - v_int
    iou = v_int / union
    dvp_ds = vol_p / s
    du_dt = -dvint_dt
    du_ds = dvp_ds - dvint_ds
    diou_dt = (dvint_dt * union - v_int * du_dt) / union**2
    diou_ds = (dvint_ds * union - v_int * du_ds) / union**2
    # exact face coincidence is a kink of the composite IoU: take subgradient 0
    tie = (hi_p == hi_g) | (lo_p == lo_g)
    diou_dt = np.where(tie, 0.0, diou_dt)
    diou_ds = np.where(tie, 0.0, diou_ds)

    diff = t - gt.center
    rho2 = float(diff @ diff)
    enc = np.maximum(hi_p, hi_g) - np.minimum(lo_p, lo_g)
    c2 = float(enc @ enc)
    de_hi = (hi_p > hi_g).astype(np.float64)
    de_lo = (lo_p < lo_g).astype(np.float64)
    de_dt = de_hi - de_lo
    de_ds = 0.5 * (de_hi + de_lo)
    dc2_dt = 2.0 * enc * de_dt
    dc2_ds = 2.0 * enc * de_ds
    dpen_dt = (2.0 * diff * c2 - rho2 * dc2_dt) / c2**2
    dpen_ds = -rho2 * dc2_ds / c2**2

    value = 1.0 - iou + rho2 / c2
    grad_t = -diou_dt + dpen_dt
    grad_s = (-diou_ds + dpen_ds) * s  # chain through size = exp(log_size)
    return LossValue(value=value, gradient=np.concatenate([grad_t, grad_s]))


def l1_loss(pred, target) -> LossValue:
    """Mean absolute difference; subgradient 0 at exact equality."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise LengthMismatch(f"pred has {pred.shape[0]} values, target {target.shape[0]}")
    diff = pred - target
    return LossValue(value=float(np.mean(np.abs(diff))), gradient=np.sign(diff) / diff.size)


def total_loss(
    det_logits,
    det_reg,
    det_locations,
    det_assignment: Sequence[tuple[int, int]],
    objects: Sequence[DetectedObject],
    wall_logits,
    wall_reg,
    wall_locations,
    wall_assignment: Sequence[tuple[int, int]],
    walls: Sequence[Wall],
    scheme: str = "bev2h",
    alpha: float = 0.25,
    gamma: float = 2.0,
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0),
) -> TotalLoss:
    """Unweighted-by-default sum of the four loss terms.

    Classification terms run over all locations (unassigned ones are
    negatives) and are averaged per location; regression terms run over
    the assigned pairs only and are averaged per pair. The gradient is
    the concatenation of the member gradients, laid out row-major as
    [det_logits, det_reg, wall_logits, wall_reg].

    det_assignment / wall_assignment are (location index, target index)
    pairs; each location appears at most once per assignment.
    """
    det_logits = np.atleast_2d(np.asarray(det_logits, dtype=np.float64))
    det_reg = np.atleast_2d(np.asarray(det_reg, dtype=np.float64))
    det_locations = np.atleast_2d(np.asarray(det_locations, dtype=np.float64))
    wall_logits = np.asarray(wall_logits, dtype=np.float64).reshape(-1)
    wall_reg = np.atleast_2d(np.asarray(wall_reg, dtype=np.float64))
    wall_locations = np.atleast_2d(np.asarray(wall_locations, dtype=np.float64))

    n_det = det_logits.shape[0]
    n_wall = wall_logits.shape[0]
    if det_reg.shape != (n_det, 6) and n_det:
        raise LengthMismatch(f"det_reg must be ({n_det}, 6), got {det_reg.shape}")
    if n_det and det_locations.shape != (n_det, 3):
        raise LengthMismatch(f"det_locations must be ({n_det}, 3), got {det_locations.shape}")
    arity = param_count(scheme)
    if n_wall and wall_reg.shape != (n_wall, arity):
        raise LengthMismatch(f"wall_reg must be ({n_wall}, {arity}), got {wall_reg.shape}")
    if n_wall and wall_locations.shape != (n_wall, 3):
        raise LengthMismatch(f"wall_locations must be ({n_wall}, 3), got {wall_locations.shape}")

    # detection classification: one binary target per (location, class)
    det_targets = np.zeros_like(det_logits)
    for loc_idx, obj_idx in det_assignment:
        det_targets[loc_idx, objects[obj_idx].category - 1] = 1.0
    if n_det:
        values, grads = _focal_terms(det_logits, det_targets, alpha, gamma)
        det_focal = float(np.sum(values)) / n_det
        d_det_logits = grads / n_det
    else:
        det_focal = 0.0
        d_det_logits = np.zeros_like(det_logits)

    # detection regression: DIoU over assigned pairs
    d_det_reg = np.zeros_like(det_reg)
    det_diou = 0.0
    if det_assignment:
        parts = []
        for loc_idx, obj_idx in det_assignment:
            part = diou_loss(
                det_reg[loc_idx, :3], det_reg[loc_idx, 3:], det_locations[loc_idx], objects[obj_idx].box
            )
            parts.append(part.value)
            d_det_reg[loc_idx] += part.gradient
        det_diou = float(np.sum(parts)) / len(det_assignment)
        d_det_reg /= len(det_assignment)

    # wall classification
    wall_targets = np.zeros(n_wall)
    for loc_idx, _ in wall_assignment:
        wall_targets[loc_idx] = 1.0
    if n_wall:
        values, grads = _focal_terms(wall_logits, wall_targets, alpha, gamma)
        wall_focal = float(np.sum(values)) / n_wall
        d_wall_logits = grads / n_wall
    else:
        wall_focal = 0.0
        d_wall_logits = np.zeros(0)

    # wall regression: L1 against encode targets at each assigned anchor
    d_wall_reg = np.zeros_like(wall_reg)
    wall_l1 = 0.0
    if wall_assignment:
        parts = []
        for loc_idx, wall_idx in wall_assignment:
            target_vec = encode_params(scheme, walls[wall_idx], wall_locations[loc_idx])
            part = l1_loss(wall_reg[loc_idx], target_vec)
            parts.append(part.value)
            d_wall_reg[loc_idx] += part.gradient
        wall_l1 = float(np.sum(parts)) / len(wall_assignment)
        d_wall_reg /= len(wall_assignment)

    w = tuple(float(x) for x in weights)
    terms = {
        "det_focal": det_focal,
        "det_diou": det_diou,
        "wall_focal": wall_focal,
        "wall_l1": wall_l1,
    }
    value = w[0] * det_focal + w[1] * det_diou + w[2] * wall_focal + w[3] * wall_l1
    gradient = np.concatenate(
        [
            (w[0] * d_det_logits).reshape(-1),
            (w[1] * d_det_reg).reshape(-1),
            w[2] * d_wall_logits,
            (w[3] * d_wall_reg).reshape(-1),
        ]
    )
    return TotalLoss(value=value, gradient=gradient, terms=terms)
