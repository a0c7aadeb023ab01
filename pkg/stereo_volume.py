#!/usr/bin/env python
"""
Stereo volume construction and the depth head

V_st(u, v, w) = concat[F_L(u, v), F_R(u - f*b / (z(w)*S), v)], a softmax over
the depth axis of a score volume, expectation-based depth regression and a
smooth-L1 depth loss. The composite training loss combines the detection,
depth and distillation terms with scalar weights.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core_types import CostVolume, DepthMap, FeatureMap, StereoCalib
from errors import DimensionError, DomainError
from geometry import depth_levels, reprojection_offset

logger = logging.getLogger(__name__)

SMOOTH_L1_BETA = 1.0


@dataclass(frozen=True, eq=False)
class ScoreVolume:
    """Pre-softmax scores, (H, W, N_d); stands in for the filtered volume"""
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64, copy=True)
        if scores.ndim != 3 or min(scores.shape) < 1:
            raise DimensionError(f"score volume needs shape (H, W, N_d), got {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise DomainError("score volume contains NaN or Inf")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def num_levels(self) -> int:
        return self.scores.shape[2]


@dataclass(frozen=True, eq=False)
class DepthDistribution:
    """P_st: per-pixel probabilities over candidate depth levels, (H, W, N_d)"""
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64, copy=True)
        if p.ndim != 3 or min(p.shape) < 1:
            raise DimensionError(f"depth distribution needs shape (H, W, N_d), got {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError("probabilities must be finite and >= 0")
        if not np.allclose(p.sum(axis=2), 1.0, rtol=0.0, atol=1e-9):
            raise DomainError("probabilities must sum to 1 over the depth axis")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @property
    def num_levels(self) -> int:
        return self.p.shape[2]


@dataclass
class LossDiagnostics:
    """Counters a caller can pass in to observe degenerate loss evaluations"""
    empty_depth_loss: int = 0


# ============================================================================
# Volume
# ============================================================================

def _shift_columns(data: np.ndarray, n: int) -> np.ndarray:
    """out[:, u] = data[:, u + n], zero where u + n is outside the map"""
    out = np.zeros_like(data)
    w = data.shape[1]
    if n >= 0:
        if n < w:
            out[:, : w - n] = data[:, n:]
    elif -n < w:
        out[:, -n:] = data[:, : w + n]
    return out


def reproject_right(f_right: FeatureMap, calib: StereoCalib, w: int) -> FeatureMap:
    """
    Resample F_R at column u - offset(w), linearly between neighbors

    The offset is the same for every column, so the result is a blend of two
    integer shifts. Source columns outside [0, W-1] contribute 0.
    """
    offset = reprojection_offset(w, calib)
    base = math.floor(-offset)
    frac = -offset - base

    lower = _shift_columns(f_right.data, base)
    if frac == 0.0:
        return FeatureMap(lower)
    upper = _shift_columns(f_right.data, base + 1)
    return FeatureMap((1.0 - frac) * lower + frac * upper)


def build_stereo_volume(f_left: FeatureMap, f_right: FeatureMap, calib: StereoCalib) -> CostVolume:
    """Concatenate F_L with the reprojected F_R at every candidate depth"""
    if f_left.shape != f_right.shape:
        raise DimensionError(f"left features {f_left.shape} and right features {f_right.shape} differ")

    h, w, c = f_left.shape
    volume = np.empty((h, w, calib.num_depth_levels, 2 * c), dtype=np.float64)
    for level in range(calib.num_depth_levels):
        volume[:, :, level, :c] = f_left.data
        volume[:, :, level, c:] = reproject_right(f_right, calib, level).data

    logger.debug(f"Built stereo volume {w}x{h}x{calib.num_depth_levels}x{2 * c}")
    return CostVolume(volume)


# ============================================================================
# Depth head
# ============================================================================

def depth_distribution(scores: ScoreVolume) -> DepthDistribution:
    """Softmax over the depth axis, stabilized by subtracting the per-pixel max"""
    shifted = scores.scores - scores.scores.max(axis=2, keepdims=True)
    weights = np.exp(shifted)
    return DepthDistribution(weights / weights.sum(axis=2, keepdims=True))


def soft_depth_regression(dist: DepthDistribution, calib: StereoCalib) -> DepthMap:
    """Expected depth sum_w p(w) * z(w), kept inside [z_min, z_max]"""
    if dist.num_levels != calib.num_depth_levels:
        raise DimensionError(
            f"distribution has {dist.num_levels} levels, calibration has {calib.num_depth_levels}"
        )
    levels = depth_levels(calib)
    z = np.tensordot(dist.p, levels, axes=([2], [0]))
    z = np.clip(z, levels[0], levels[-1])
    return DepthMap(z, np.ones(z.shape, dtype=bool))


def smooth_l1(residual: np.ndarray, beta: float = SMOOTH_L1_BETA) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a < beta, 0.5 * a * a / beta, a - 0.5 * beta)


def depth_loss(pred: DepthMap, gt: DepthMap, diagnostics: Optional[LossDiagnostics] = None) -> float:
    """Mean smooth-L1 over pixels valid in both maps; 0 if there are none"""
    if pred.shape != gt.shape:
        raise DimensionError(f"predicted depth {pred.shape} and ground truth {gt.shape} differ")
    joint = pred.valid & gt.valid
    if not joint.any():
        logger.warning("Depth loss evaluated with no jointly valid pixels, returning 0")
        if diagnostics is not None:
            diagnostics.empty_depth_loss += 1
        return 0.0
    return float(np.mean(smooth_l1(pred.z[joint] - gt.z[joint])))


def combined_loss(
    loss_det: float,
    loss_depth: float,
    loss_kd: float,
    lambda_det: float = 1.0,
    lambda_depth: float = 1.0,
    lambda_kd: float = 1.0,
    strict: bool = False
) -> float:
    """
    L = lambda_det*L_det + lambda_depth*L_depth + lambda_kd*L_kd

    In strict mode lambda_depth must be 0 or 1 (the depth-loss switch).
    With lambda_depth == 0 the depth term is dropped entirely, so any finite
    L_depth gives the same result.
    """
    terms = (loss_det, loss_depth, loss_kd, lambda_det, lambda_depth, lambda_kd)
    if not all(math.isfinite(t) for t in terms):
        raise DomainError(f"loss components and weights must be finite, got {terms}")
    if strict and lambda_depth not in (0, 1):
        raise DomainError(f"lambda_depth must be 0 or 1 in strict mode, got {lambda_depth}")

    total = lambda_det * loss_det + lambda_kd * loss_kd
    if lambda_depth != 0:
        total = lambda_det * loss_det + lambda_depth * loss_depth + lambda_kd * loss_kd
    return total
