#!/usr/bin/env python
"""
Stereo geometry helpers
Depth <-> disparity conversion (d = f*b/z), candidate depth levels
(z = w*v_d + z_min) and the per-level reprojection offset f*b / (z(w)*S).
"""
import logging
import math

import numpy as np

from core_types import DepthMap, DisparityMap, StereoCalib
from errors import DepthIndexError, DimensionError, DomainError

logger = logging.getLogger(__name__)


def depth_to_disparity(z: float, calib: StereoCalib) -> float:
    """Disparity in pixels for a depth in meters"""
    if not math.isfinite(z) or z <= 0:
        raise DomainError(f"depth must be finite and > 0, got {z}")
    return calib.focal_baseline / z


def disparity_to_depth(d: float, calib: StereoCalib) -> float:
    """Depth in meters for a disparity in pixels"""
    if not math.isfinite(d) or d <= 0:
        raise DomainError(f"disparity must be finite and > 0, got {d}")
    return calib.focal_baseline / d


def _check_level(w: int, calib: StereoCalib) -> int:
    if isinstance(w, bool) or int(w) != w or not 0 <= w < calib.num_depth_levels:
        raise DepthIndexError(f"depth level {w} outside 0..{calib.num_depth_levels - 1}")
    return int(w)


def depth_level(w: int, calib: StereoCalib) -> float:
    """Candidate depth for level w"""
    w = _check_level(w, calib)
    return w * calib.depth_interval_m + calib.z_min_m


def reprojection_offset(w: int, calib: StereoCalib) -> float:
    """Horizontal shift, in feature pixels, of the right features for level w"""
    w = _check_level(w, calib)
    if calib.offset_override is not None:
        return calib.offset_override
    return calib.focal_baseline / (depth_level(w, calib) * calib.stride)


def depth_levels(calib: StereoCalib) -> np.ndarray:
    """All candidate depths, w = 0..N_d-1"""
    return np.array([depth_level(w, calib) for w in range(calib.num_depth_levels)], dtype=np.float64)


def reprojection_offsets(calib: StereoCalib) -> np.ndarray:
    return np.array([reprojection_offset(w, calib) for w in range(calib.num_depth_levels)], dtype=np.float64)


# ============================================================================
# Map-level conversions (mask propagates unchanged, invalid pixels carry 0)
# ============================================================================

def depth_map_to_disparity_map(depth: DepthMap, calib: StereoCalib) -> DisparityMap:
    d = np.zeros(depth.shape, dtype=np.float64)
    d[depth.valid] = calib.focal_baseline / depth.z[depth.valid]
    return DisparityMap(d, depth.valid)


def disparity_map_to_depth_map(disp: DisparityMap, calib: StereoCalib) -> DepthMap:
    values = disp.d[disp.valid]
    if np.any(values <= 0):
        raise DomainError("zero disparity has no finite depth")
    z = np.zeros(disp.shape, dtype=np.float64)
    z[disp.valid] = calib.focal_baseline / values
    return DepthMap(z, disp.valid)


def downsample_disparity(disp: DisparityMap, stride: int) -> DisparityMap:
    """
    Average the valid pixels of every stride x stride cell

    A cell without valid pixels is invalid. Both dimensions must be
    divisible by the stride.
    """
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    h, w = disp.shape
    if h % stride or w % stride:
        raise DimensionError(f"disparity map {w}x{h} is not divisible by stride {stride}")
    if stride == 1:
        return disp

    cells = (h // stride, stride, w // stride, stride)
    weights = disp.valid.astype(np.float64).reshape(cells).sum(axis=(1, 3))
    sums = np.where(disp.valid, disp.d, 0.0).reshape(cells).sum(axis=(1, 3))
    valid = weights > 0
    d = np.divide(sums, weights, out=np.zeros_like(sums), where=valid)
    logger.debug(f"Downsampled disparity {w}x{h} -> {w // stride}x{h // stride}, {int((~valid).sum())} empty cells")
    return DisparityMap(d, valid)
