#!/usr/bin/env python
"""
Disparity-wise dynamic convolution (DDC)

Feature-level virtual right view: every output feature is the 3x3-window
average of F_L * F_D (Hadamard product, per channel, zero padding, fixed 1/9).
Two forward paths are provided, a per-pixel sliding window and a nine-shift
whole-map formulation, plus the analytic adjoint of the bilinear op.

Both forward paths accumulate in GridShift order (-1,-1) ... (1,1) and scale
by 1/9 after the sum, so they agree bit for bit.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core_types import DisparityMap, FeatureMap
from errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

WINDOW_TAPS = 9


class DisparityNormalization(BaseModel):
    """Dataset statistics used to whiten disparities before DDC"""
    model_config = ConfigDict(frozen=True)

    mu: float = Field(default=33.20, allow_inf_nan=False)
    sigma: float = Field(default=15.91, gt=0, allow_inf_nan=False)


class GridShift(BaseModel):
    """One of the nine (g_i, g_j) offsets; g_i moves along columns, g_j along rows"""
    model_config = ConfigDict(frozen=True)

    g_i: int = Field(..., ge=-1, le=1)
    g_j: int = Field(..., ge=-1, le=1)

    @classmethod
    def all(cls) -> Tuple["GridShift", ...]:
        return GRID_SHIFTS


GRID_SHIFTS: Tuple[GridShift, ...] = tuple(
    GridShift(g_i=g_i, g_j=g_j) for g_i in (-1, 0, 1) for g_j in (-1, 0, 1)
)


def _require_same_shape(*maps: FeatureMap) -> None:
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise DimensionError(f"feature maps must share W, H, C, got {sorted(shapes)}")


def normalize_disparity(disp: DisparityMap, norm: Optional[DisparityNormalization] = None) -> FeatureMap:
    """(d - mu) / sigma on valid pixels, 0 elsewhere; single channel"""
    norm = norm or DisparityNormalization()
    if norm.sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {norm.sigma}")
    out = np.zeros(disp.shape, dtype=np.float64)
    out[disp.valid] = (disp.d[disp.valid] - norm.mu) / norm.sigma
    return FeatureMap(out[:, :, np.newaxis])


def broadcast_channels(feature: FeatureMap, channels: int) -> FeatureMap:
    """Replicate a single-channel map across C channels"""
    if feature.channels != 1:
        raise DimensionError(f"only single-channel maps can be broadcast, got C={feature.channels}")
    return FeatureMap(np.repeat(feature.data, channels, axis=2))


# ============================================================================
# Forward
# ============================================================================

def ddc_forward_naive(f_left: FeatureMap, f_disp: FeatureMap) -> FeatureMap:
    """Sliding 3x3 window evaluated once per output pixel"""
    _require_same_shape(f_left, f_disp)
    h, w, c = f_left.shape
    left, kernel = f_left.data, f_disp.data
    out = np.empty((h, w, c), dtype=np.float64)

    for row in range(h):
        for col in range(w):
            acc = np.zeros(c, dtype=np.float64)
            for shift in GRID_SHIFTS:
                r, q = row + shift.g_j, col + shift.g_i
                if 0 <= r < h and 0 <= q < w:
                    acc = acc + left[r, q] * kernel[r, q]
            out[row, col] = acc / WINDOW_TAPS

    return FeatureMap(out)


def _shifted_windows(padded: np.ndarray, height: int, width: int):
    """W x H views of a 1-pixel zero-padded map, one per grid shift"""
    for shift in GRID_SHIFTS:
        r0, c0 = 1 + shift.g_j, 1 + shift.g_i
        yield padded[r0:r0 + height, c0:c0 + width]


def _pad(data: np.ndarray) -> np.ndarray:
    return np.pad(data, ((1, 1), (1, 1), (0, 0)), mode="constant", constant_values=0.0)


def ddc_forward_gridshift(f_left: FeatureMap, f_disp: FeatureMap) -> FeatureMap:
    """Nine whole-map shifted Hadamard products summed together"""
    _require_same_shape(f_left, f_disp)
    h, w, c = f_left.shape
    acc = np.zeros((h, w, c), dtype=np.float64)
    windows = zip(_shifted_windows(_pad(f_left.data), h, w), _shifted_windows(_pad(f_disp.data), h, w))
    for left_win, kernel_win in windows:
        acc = acc + left_win * kernel_win
    return FeatureMap(acc / WINDOW_TAPS)


ddc_forward = ddc_forward_gridshift


# ============================================================================
# Backward
# ============================================================================

def box_sum_3x3(data: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 box sum over the two spatial axes"""
    h, w = data.shape[:2]
    acc = np.zeros_like(data, dtype=np.float64)
    for window in _shifted_windows(_pad(data), h, w):
        acc = acc + window
    return acc


def ddc_backward(
    grad_out: FeatureMap,
    f_left: FeatureMap,
    f_disp: FeatureMap
) -> Tuple[FeatureMap, FeatureMap]:
    """
    Adjoint of the DDC forward pass

    A feature at p feeds every window centered within Chebyshev distance 1,
    each with weight F_D(p) / 9, so dL/dF_L(p) = F_D(p) * box3(grad_out)(p) / 9
    and symmetrically for F_D.
    """
    _require_same_shape(grad_out, f_left, f_disp)
    spread = box_sum_3x3(grad_out.data) / WINDOW_TAPS
    return FeatureMap(spread * f_disp.data), FeatureMap(spread * f_left.data)


# ============================================================================
# Pipeline
# ============================================================================

def generate_virtual_right_features(
    f_left: FeatureMap,
    disp: DisparityMap,
    norm: Optional[DisparityNormalization] = None
) -> FeatureMap:
    """
    F'_L -> virtual F'_R using the normalized disparity as dynamic kernels

    The disparity must already be at feature resolution (see
    geometry.downsample_disparity).
    """
    if disp.shape != (f_left.height, f_left.width):
        raise DimensionError(
            f"disparity {disp.width}x{disp.height} does not match features {f_left.width}x{f_left.height}"
        )
    kernels = broadcast_channels(normalize_disparity(disp, norm), f_left.channels)
    logger.debug(f"DDC on {f_left.width}x{f_left.height}x{f_left.channels} features")
    return ddc_forward_gridshift(f_left, kernels)
