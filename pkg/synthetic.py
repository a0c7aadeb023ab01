#!/usr/bin/env python
"""
Seeded synthetic inputs, so every check and command runs without external data
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core_types import DepthMap, FeatureMap, RasterImage, StereoCalib


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def default_calib(**overrides) -> StereoCalib:
    """Small desk-scale calibration: f*b = 400, stride 4, depths 10..17 m"""
    values = dict(
        focal_px=400.0,
        baseline_m=1.0,
        stride=4,
        z_min_m=10.0,
        depth_interval_m=1.0,
        num_depth_levels=8,
    )
    values.update(overrides)
    return StereoCalib(**values)


def random_feature_map(rng: np.random.Generator, width: int, height: int, channels: int,
                       low: float = -1.0, high: float = 1.0) -> FeatureMap:
    return FeatureMap(rng.uniform(low, high, size=(height, width, channels)))


def random_image(rng: np.random.Generator, width: int, height: int, channels: int = 3) -> RasterImage:
    """8-bit representable intensities, so images survive a PPM round trip"""
    return RasterImage(rng.integers(0, 256, size=(height, width, channels)) / 255.0)


def constant_depth(width: int, height: int, z: float) -> DepthMap:
    return DepthMap.from_array(np.full((height, width), float(z)))


@dataclass(frozen=True)
class TwoPlaneScene:
    """Near vertical strip over a far background"""
    depth: DepthMap
    strip_start: int
    strip_stop: int
    near_disparity: int
    far_disparity: int


def two_plane_scene(
    width: int,
    height: int,
    calib: StereoCalib,
    near_disparity: int = 6,
    far_disparity: int = 2,
    strip_start: Optional[int] = None,
    strip_width: Optional[int] = None
) -> TwoPlaneScene:
    """Depths chosen so the disparities come out as the requested integers"""
    strip_start = width // 3 if strip_start is None else strip_start
    strip_width = max(3, width // 4) if strip_width is None else strip_width
    strip_stop = min(width, strip_start + strip_width)

    z = np.full((height, width), calib.focal_baseline / far_disparity)
    z[:, strip_start:strip_stop] = calib.focal_baseline / near_disparity
    return TwoPlaneScene(
        depth=DepthMap.from_array(z),
        strip_start=strip_start,
        strip_stop=strip_stop,
        near_disparity=near_disparity,
        far_disparity=far_disparity,
    )


def random_scores(rng: np.random.Generator, width: int, height: int, levels: int, scale: float = 3.0) -> np.ndarray:
    return rng.normal(0.0, scale, size=(height, width, levels))
