#!/usr/bin/env python
"""
Pseudo-Stereo pipelines
Builds the (left, virtual right) pair and its stereo volume for each of the
three generation variants: image level, feature level and feature clone.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from core_types import CostVolume, DepthMap, DisparityMap, FeatureMap, RasterImage, StereoCalib
from ddc import DisparityNormalization, generate_virtual_right_features
from errors import DimensionError
from feature_clone import clone_features
from geometry import depth_map_to_disparity_map, downsample_disparity
from stereo_volume import build_stereo_volume
from view_synthesis import HoleFill, WarpConfig, synthesize_right_view

logger = logging.getLogger(__name__)


class PseudoStereoVariant(str, Enum):
    IMAGE_LEVEL = "image_level"
    FEATURE_LEVEL = "feature_level"
    FEATURE_CLONE = "feature_clone"


# Depth-loss switch that worked best per variant: the warped image degrades
# features, so the image-level variant trains without it.
RECOMMENDED_LAMBDA_DEPTH = {
    PseudoStereoVariant.IMAGE_LEVEL: 0,
    PseudoStereoVariant.FEATURE_LEVEL: 1,
    PseudoStereoVariant.FEATURE_CLONE: 1,
}


@dataclass(frozen=True)
class PseudoStereoResult:
    variant: PseudoStereoVariant
    left: FeatureMap
    right: FeatureMap
    volume: CostVolume
    lambda_depth: int
    virtual_image: Optional[RasterImage] = None


def image_to_features(image: RasterImage, stride: int) -> FeatureMap:
    """
    Average-pool an image into a stride-S feature map

    Stands in for the learned image backbone. Hole pixels count as 0.
    """
    h, w, c = image.shape
    if h % stride or w % stride:
        raise DimensionError(f"image {w}x{h} is not divisible by stride {stride}")
    values = np.where(image.hole_mask[:, :, np.newaxis], 0.0, image.intensities)
    pooled = values.reshape(h // stride, stride, w // stride, stride, c).mean(axis=(1, 3))
    return FeatureMap(pooled)


def _result(variant, left, right, calib, virtual_image=None) -> PseudoStereoResult:
    volume = build_stereo_volume(left, right, calib)
    logger.info(
        f"{variant.value}: volume {volume.width}x{volume.height}x{volume.num_levels}x{volume.channels}, "
        f"recommended lambda_depth={RECOMMENDED_LAMBDA_DEPTH[variant]}"
    )
    return PseudoStereoResult(
        variant=variant,
        left=left,
        right=right,
        volume=volume,
        lambda_depth=RECOMMENDED_LAMBDA_DEPTH[variant],
        virtual_image=virtual_image,
    )


def image_level(
    left_image: RasterImage,
    depth: DepthMap,
    calib: StereoCalib,
    config: Optional[WarpConfig] = None
) -> PseudoStereoResult:
    """Warp the left image, then pool both images into features"""
    config = (config or WarpConfig()).model_copy(update={"hole_fill": HoleFill.ZERO_FILL})
    virtual = synthesize_right_view(left_image, depth, calib, config)
    left = image_to_features(left_image, calib.stride)
    right = image_to_features(virtual, calib.stride)
    return _result(PseudoStereoVariant.IMAGE_LEVEL, left, right, calib, virtual)


def feature_level(
    f_left: FeatureMap,
    disparity: DisparityMap,
    calib: StereoCalib,
    norm: Optional[DisparityNormalization] = None
) -> PseudoStereoResult:
    """
    DDC with the normalized disparity as kernels

    A full-resolution disparity map is averaged down to feature resolution
    first.
    """
    if disparity.shape != (f_left.height, f_left.width):
        disparity = downsample_disparity(disparity, calib.stride)
    right = generate_virtual_right_features(f_left, disparity, norm)
    return _result(PseudoStereoVariant.FEATURE_LEVEL, f_left, right, calib)


def feature_clone(f_left: FeatureMap, calib: StereoCalib) -> PseudoStereoResult:
    return _result(PseudoStereoVariant.FEATURE_CLONE, f_left, clone_features(f_left), calib)


def build_pseudo_stereo_volume(
    variant: PseudoStereoVariant,
    calib: StereoCalib,
    left_image: Optional[RasterImage] = None,
    f_left: Optional[FeatureMap] = None,
    depth: Optional[DepthMap] = None,
    warp_config: Optional[WarpConfig] = None,
    norm: Optional[DisparityNormalization] = None
) -> PseudoStereoResult:
    """Dispatch to the requested variant, checking that its inputs were given"""
    variant = PseudoStereoVariant(variant)
    if variant == PseudoStereoVariant.IMAGE_LEVEL:
        if left_image is None or depth is None:
            raise ValueError("image_level needs left_image and depth")
        return image_level(left_image, depth, calib, warp_config)
    if variant == PseudoStereoVariant.FEATURE_LEVEL:
        if f_left is None or depth is None:
            raise ValueError("feature_level needs f_left and depth")
        return feature_level(f_left, depth_map_to_disparity_map(depth, calib), calib, norm)
    if f_left is None:
        raise ValueError("feature_clone needs f_left")
    return feature_clone(f_left, calib)
