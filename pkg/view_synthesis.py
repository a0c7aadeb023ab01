#!/usr/bin/env python
"""
Image-level virtual right view generation

Depth map -> disparity -> flying-pixel sharpening -> forward warp of the left
image with a z-buffer (larger disparity wins). Splatting is nearest-pixel, so
every non-hole output intensity is copied from some input pixel unchanged.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage as ndi

from core_types import DepthMap, DisparityMap, RasterImage, StereoCalib
from errors import DimensionError
from geometry import depth_map_to_disparity_map

logger = logging.getLogger(__name__)

MAX_SHARPEN_PASSES = 8


class CollisionRule(str, Enum):
    FOREGROUND_WINS = "foreground-wins"


class HoleFill(str, Enum):
    MASK_ONLY = "mask-only"
    ZERO_FILL = "zero-fill"


class WarpConfig(BaseModel):
    """Settings for image-level generation"""
    model_config = ConfigDict(frozen=True)

    sobel_threshold: float = Field(default=3.0, gt=0, allow_inf_nan=False)
    collision_rule: CollisionRule = CollisionRule.FOREGROUND_WINS
    hole_fill: HoleFill = HoleFill.MASK_ONLY
    sharpen: bool = True


@dataclass(frozen=True, eq=False)
class SharpenReport:
    passes: int
    replaced_pixels: int
    unresolved_pixels: int
    converged: bool
    flagged: np.ndarray


# ============================================================================
# Flying pixels
# ============================================================================

def _fill_invalid(disp: DisparityMap) -> np.ndarray:
    """Copy of d with each invalid pixel set to its nearest valid neighbor"""
    if disp.valid.all():
        return disp.d
    nearest = ndi.distance_transform_edt(~disp.valid, return_distances=False, return_indices=True)
    return disp.d[tuple(nearest)]


def sobel_magnitude(disp: DisparityMap) -> np.ndarray:
    """
    sqrt(gx^2 + gy^2) with the standard 3x3 Sobel pair and replicate padding.
    Invalid pixels take their nearest valid value first so that holes in the
    map do not read as depth edges.
    """
    h, w = disp.shape
    if h < 3 or w < 3:
        raise DimensionError(f"Sobel needs at least 3x3, got {w}x{h}")
    if not disp.valid.any():
        return np.zeros(disp.shape)
    d = _fill_invalid(disp)
    gx = ndi.sobel(d, axis=1, mode="nearest")
    gy = ndi.sobel(d, axis=0, mode="nearest")
    return np.sqrt(gx * gx + gy * gy)


def detect_flying_pixels(disp: DisparityMap, config: Optional[WarpConfig] = None) -> np.ndarray:
    """Valid pixels whose Sobel magnitude is strictly above the threshold"""
    config = config or WarpConfig()
    return (sobel_magnitude(disp) > config.sobel_threshold) & disp.valid


def _replace_from_nearest(
    d: np.ndarray, mask: np.ndarray, valid: np.ndarray
) -> Tuple[np.ndarray, int, int]:
    """
    One sharpening pass: each masked valid pixel takes the value of the
    nearest valid unmasked pixel in its row, ties going to the larger
    disparity. Returns the new map, the number of values that changed and
    the number of masked pixels whose row has no anchor.
    """
    out = d.copy()
    changed = 0
    unresolved = 0
    targets_mask = mask & valid

    for row in np.flatnonzero(targets_mask.any(axis=1)):
        anchors = np.flatnonzero(valid[row] & ~mask[row])
        targets = np.flatnonzero(targets_mask[row])
        if anchors.size == 0:
            unresolved += targets.size
            continue

        # nearest anchor on each side of every target
        right_pos = np.searchsorted(anchors, targets)
        left_idx = anchors[np.clip(right_pos - 1, 0, anchors.size - 1)]
        right_idx = anchors[np.clip(right_pos, 0, anchors.size - 1)]
        left_dist = np.where(right_pos > 0, targets - left_idx, np.iinfo(np.int64).max)
        right_dist = np.where(right_pos < anchors.size, right_idx - targets, np.iinfo(np.int64).max)

        left_val = d[row, left_idx]
        right_val = d[row, right_idx]
        tie_value = np.maximum(left_val, right_val)
        chosen = np.where(
            left_dist < right_dist, left_val,
            np.where(right_dist < left_dist, right_val, tie_value)
        )
        changed += int(np.count_nonzero(chosen != d[row, targets]))
        out[row, targets] = chosen

    return out, changed, unresolved


def sharpen_disparity_with_report(
    disp: DisparityMap,
    mask: np.ndarray,
    config: Optional[WarpConfig] = None,
    max_passes: int = MAX_SHARPEN_PASSES
) -> Tuple[DisparityMap, SharpenReport]:
    """
    Replace flying pixels by their nearest non-flying row neighbor

    Invalid pixels are never anchors and never rewritten. Without a config a
    single pass over the given mask is made. With a config (and a map of at
    least 3x3) flying pixels are re-detected on the whole map after each pass
    and the next pass uses the new mask. Iteration stops once a pass changes
    nothing and re-detection returns the same mask, which makes the output a
    fixed point of detect-then-sharpen; the report says whether that happened
    within max_passes. Pixels never flagged by any pass keep their value.
    Rows with no valid non-flying pixel have no anchor and are left as they are.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != disp.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match disparity shape {disp.shape}")

    valid = disp.valid
    current = disp.d
    active = mask & valid
    flagged = active.copy()
    passes = 0
    replaced = 0
    unresolved = 0
    converged = False
    iterate = config is not None and min(disp.shape) >= 3

    while True:
        current, changed_now, unresolved = _replace_from_nearest(current, active, valid)
        replaced += changed_now
        passes += 1
        if not iterate:
            converged = changed_now == 0
            break
        redetected = detect_flying_pixels(DisparityMap(current, valid), config)
        if changed_now == 0 and np.array_equal(redetected, active):
            converged = True
            break
        if passes >= max_passes:
            break
        active = redetected
        flagged |= active

    if unresolved:
        logger.warning(f"Sharpening left {unresolved} flying pixels unchanged (no anchor in row)")
    if iterate and not converged:
        logger.warning(f"Sharpening did not reach a fixed point in {passes} passes")

    report = SharpenReport(
        passes=passes,
        replaced_pixels=replaced,
        unresolved_pixels=unresolved,
        converged=converged,
        flagged=flagged
    )
    return DisparityMap(current, valid), report


def sharpen_disparity(
    disp: DisparityMap,
    mask: np.ndarray,
    config: Optional[WarpConfig] = None,
    max_passes: int = MAX_SHARPEN_PASSES
) -> DisparityMap:
    sharpened, _ = sharpen_disparity_with_report(disp, mask, config, max_passes)
    return sharpened


# ============================================================================
# Forward warping
# ============================================================================

def forward_warp(left: RasterImage, disp: DisparityMap, config: Optional[WarpConfig] = None) -> RasterImage:
    """
    Splat each valid left pixel (x, v) to (round(x - d), v)

    Rounding is half-up (floor(x - d + 0.5)). When several sources land on
    one target the larger disparity wins, so the result does not depend on
    visiting order. Targets nobody reached are holes.
    """
    config = config or WarpConfig()
    if left.shape[:2] != disp.shape:
        raise DimensionError(f"image {left.width}x{left.height} and disparity {disp.width}x{disp.height} differ")

    h, w = disp.shape
    rows, cols = np.nonzero(disp.valid)
    values = disp.d[rows, cols]
    target_cols = np.floor(cols - values + 0.5).astype(np.int64)
    inside = (target_cols >= 0) & (target_cols < w)
    rows, cols, values, target_cols = rows[inside], cols[inside], values[inside], target_cols[inside]

    target_flat = rows * w + target_cols
    # group by target, then by disparity; the last entry of each group wins
    order = np.lexsort((cols, values, target_flat))
    sorted_targets = target_flat[order]
    last_of_group = np.ones(sorted_targets.size, dtype=bool)
    last_of_group[:-1] = sorted_targets[1:] != sorted_targets[:-1]
    winners = order[last_of_group]

    fill = np.nan if config.hole_fill == HoleFill.MASK_ONLY else 0.0
    out = np.full(left.shape, fill, dtype=np.float64)
    out[rows[winners], target_cols[winners]] = left.intensities[rows[winners], cols[winners]]

    holes = np.ones((h, w), dtype=bool)
    holes[rows[winners], target_cols[winners]] = False
    logger.debug(f"Forward warp {w}x{h}: {winners.size} targets written, {int(holes.sum())} holes")
    return RasterImage(out, holes)


def synthesize_right_view(
    left: RasterImage,
    depth: DepthMap,
    calib: StereoCalib,
    config: Optional[WarpConfig] = None
) -> RasterImage:
    """Depth -> disparity -> (optional) sharpening -> forward warp"""
    config = config or WarpConfig()
    if left.shape[:2] != depth.shape:
        raise DimensionError(f"image {left.width}x{left.height} and depth {depth.width}x{depth.height} differ")

    disp = depth_map_to_disparity_map(depth, calib)
    if config.sharpen and min(disp.shape) >= 3:
        flying = detect_flying_pixels(disp, config)
        disp, report = sharpen_disparity_with_report(disp, flying, config)
        logger.info(
            f"Sharpened disparity: {int(report.flagged.sum())} flying pixels, "
            f"{report.passes} passes, {report.unresolved_pixels} unresolved"
        )
    return forward_warp(left, disp, config)
