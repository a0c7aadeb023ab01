#!/usr/bin/env python
"""
Dense grid data model shared by every Pseudo-Stereo module

All grids are numpy float64 arrays in row-major (row, column, channel)
order, i.e. shape (H, W, C). Instances copy their input and mark the
storage read-only, so they can be shared freely once built.
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import DimensionError, DomainError, EmptyStatisticsError

logger = logging.getLogger(__name__)

MAX_DEPTH_LEVELS = 4096


def _frozen_copy(array, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True, order="C")
    out.flags.writeable = False
    return out


def _require_positive_dims(*dims: int) -> None:
    if any(int(d) < 1 for d in dims):
        raise DimensionError(f"every dimension must be >= 1, got {dims}")


def _require_same_plane(name_a: str, shape_a, name_b: str, shape_b) -> None:
    if tuple(shape_a) != tuple(shape_b):
        raise DimensionError(f"{name_a} shape {tuple(shape_a)} does not match {name_b} shape {tuple(shape_b)}")


# ============================================================================
# Grids
# ============================================================================

@dataclass(frozen=True, eq=False)
class FeatureMap:
    """W x H x C feature grid, stored as (H, W, C)"""
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_copy(self.data, np.float64)
        if data.ndim != 3:
            raise DimensionError(f"feature map needs 3 axes (H, W, C), got shape {data.shape}")
        _require_positive_dims(*data.shape)
        if not np.all(np.isfinite(data)):
            raise DomainError("feature map contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array) -> "FeatureMap":
        array = np.asarray(array)
        if array.ndim == 2:
            array = array[:, :, np.newaxis]
        return cls(array)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def equals(self, other: "FeatureMap") -> bool:
        """Bit-exact comparison"""
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.asarray(self.shape, dtype="<u4").tobytes())
        digest.update(self.data.astype("<f8", copy=False).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth in meters with an explicit validity mask"""
    z: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        valid = _frozen_copy(self.valid, bool)
        raw = np.asarray(self.z, dtype=np.float64)
        if raw.ndim != 2:
            raise DimensionError(f"depth map needs 2 axes (H, W), got shape {raw.shape}")
        _require_positive_dims(*raw.shape)
        _require_same_plane("depth", raw.shape, "validity mask", valid.shape)
        checked = raw[valid]
        if not np.all(np.isfinite(checked)) or np.any(checked <= 0):
            raise DomainError("valid depth pixels must be finite and > 0")
        object.__setattr__(self, "z", _frozen_copy(np.where(valid, raw, 0.0), np.float64))
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, z, valid=None) -> "DepthMap":
        """Pixels that are non-finite or <= 0 become invalid unless a mask is given"""
        z = np.asarray(z, dtype=np.float64)
        if valid is None:
            valid = np.isfinite(z) & (z > 0)
        return cls(z, valid)

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def width(self) -> int:
        return self.z.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.z.shape


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """
    Per-pixel disparity in pixels with an explicit validity mask

    Valid pixels are finite and >= 0. A zero disparity is a point at
    infinity; it warps onto itself but has no finite depth.
    """
    d: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        valid = _frozen_copy(self.valid, bool)
        raw = np.asarray(self.d, dtype=np.float64)
        if raw.ndim != 2:
            raise DimensionError(f"disparity map needs 2 axes (H, W), got shape {raw.shape}")
        _require_positive_dims(*raw.shape)
        _require_same_plane("disparity", raw.shape, "validity mask", valid.shape)
        checked = raw[valid]
        if not np.all(np.isfinite(checked)) or np.any(checked < 0):
            raise DomainError("valid disparity pixels must be finite and >= 0")
        object.__setattr__(self, "d", _frozen_copy(np.where(valid, raw, 0.0), np.float64))
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, d, valid=None) -> "DisparityMap":
        """Pixels that are non-finite or < 0 become invalid unless a mask is given"""
        d = np.asarray(d, dtype=np.float64)
        if valid is None:
            valid = np.isfinite(d) & (d >= 0)
        return cls(d, valid)

    @property
    def height(self) -> int:
        return self.d.shape[0]

    @property
    def width(self) -> int:
        return self.d.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.d.shape

    def equals(self, other: "DisparityMap") -> bool:
        return (
            self.shape == other.shape
            and self.d.tobytes() == other.d.tobytes()
            and np.array_equal(self.valid, other.valid)
        )


@dataclass(frozen=True, eq=False)
class RasterImage:
    """
    W x H image with 1 or 3 channels and a hole mask

    hole_mask is True where no source pixel was written. Only non-hole
    intensities are constrained to [0, 1]; hole intensities are whatever
    the producer chose (NaN or 0).
    """
    intensities: np.ndarray
    hole_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        raw = np.asarray(self.intensities, dtype=np.float64)
        if raw.ndim == 2:
            raw = raw[:, :, np.newaxis]
        if raw.ndim != 3 or raw.shape[2] not in (1, 3):
            raise DimensionError(f"image needs shape (H, W, 1|3), got {raw.shape}")
        _require_positive_dims(*raw.shape)
        holes = np.zeros(raw.shape[:2], dtype=bool) if self.hole_mask is None else self.hole_mask
        holes = _frozen_copy(holes, bool)
        _require_same_plane("image", raw.shape[:2], "hole mask", holes.shape)
        filled = raw[~holes]
        if not np.all(np.isfinite(filled)) or np.any(filled < 0.0) or np.any(filled > 1.0):
            raise DomainError("non-hole intensities must lie in [0, 1]")
        object.__setattr__(self, "intensities", _frozen_copy(raw, np.float64))
        object.__setattr__(self, "hole_mask", holes)

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def channels(self) -> int:
        return self.intensities.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.intensities.shape


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Plane-sweep volume V_st, stored as (H, W, N_d, 2C)"""
    data: np.ndarray

    def __post_init__(self):
        data = _frozen_copy(self.data, np.float64)
        if data.ndim != 4:
            raise DimensionError(f"cost volume needs 4 axes (H, W, N_d, 2C), got {data.shape}")
        _require_positive_dims(*data.shape)
        if data.shape[3] % 2:
            raise DimensionError(f"cost volume channel count must be even (2C), got {data.shape[3]}")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_levels(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def left_half(self) -> np.ndarray:
        return self.data[..., : self.channels // 2]

    @property
    def right_half(self) -> np.ndarray:
        return self.data[..., self.channels // 2:]


# ============================================================================
# Calibration
# ============================================================================

class StereoCalib(BaseModel):
    """
    Rectified stereo calibration plus depth discretization

    offset_override pins every reprojection offset to a fixed value; it is a
    test hook (0 gives the clone-degenerate volume) and is never read from or
    written to calibration files.
    """
    model_config = ConfigDict(frozen=True)

    focal_px: float = Field(..., gt=0, allow_inf_nan=False, description="Focal length f in pixels")
    baseline_m: float = Field(..., gt=0, allow_inf_nan=False, description="Baseline b in meters")
    stride: int = Field(..., ge=1, description="Feature stride S")
    z_min_m: float = Field(..., gt=0, allow_inf_nan=False, description="Nearest candidate depth")
    depth_interval_m: float = Field(..., gt=0, allow_inf_nan=False, description="Depth interval v_d")
    num_depth_levels: int = Field(..., ge=1, le=MAX_DEPTH_LEVELS, description="Number of candidate depth levels N_d")
    offset_override: Optional[float] = Field(default=None, ge=0, allow_inf_nan=False)

    @property
    def focal_baseline(self) -> float:
        return self.focal_px * self.baseline_m

    @property
    def z_max_m(self) -> float:
        return (self.num_depth_levels - 1) * self.depth_interval_m + self.z_min_m

    def with_offset_override(self, offset: Optional[float]) -> "StereoCalib":
        return self.model_copy(update={"offset_override": offset})


# ============================================================================
# Operations
# ============================================================================

def new_feature_map(width: int, height: int, channels: int, fill: float = 0.0) -> FeatureMap:
    """Constant-filled feature map"""
    _require_positive_dims(width, height, channels)
    if not math.isfinite(fill):
        raise DomainError(f"fill must be finite, got {fill}")
    return FeatureMap(np.full((height, width, channels), float(fill), dtype=np.float64))


def _stat_values(grid: Union[FeatureMap, DisparityMap, DepthMap]) -> np.ndarray:
    if isinstance(grid, FeatureMap):
        return grid.data.ravel()
    if isinstance(grid, DisparityMap):
        return grid.d[grid.valid]
    if isinstance(grid, DepthMap):
        return grid.z[grid.valid]
    raise TypeError(f"unsupported grid type {type(grid).__name__}")


def _two_pass(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        raise EmptyStatisticsError("no valid entries to summarize")
    mean = float(np.mean(values))
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    return mean, std


def elementwise_stats(grid: Union[FeatureMap, DisparityMap, DepthMap]) -> Tuple[float, float]:
    """(mean, population std) over all entries, or over valid pixels for masked maps"""
    return _two_pass(_stat_values(grid))


def pooled_disparity_stats(maps: Iterable[DisparityMap]) -> Tuple[float, float]:
    """
    Dataset-level (mu, sigma) over the valid pixels of many disparity maps

    This is how the disparity normalization constants are derived from a
    training split.
    """
    chunks = [m.d[m.valid] for m in maps]
    values = np.concatenate(chunks) if chunks else np.empty(0)
    mean, std = _two_pass(values)
    logger.info(f"Pooled disparity statistics over {values.size} pixels: mu={mean:.4f} sigma={std:.4f}")
    return mean, std
