"""
Tests for the three Pseudo-Stereo variants end to end
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent))

from core_types import RasterImage
from ddc import DisparityNormalization, generate_virtual_right_features
from errors import DimensionError
from geometry import depth_map_to_disparity_map, downsample_disparity
from pipelines import (
    RECOMMENDED_LAMBDA_DEPTH,
    PseudoStereoVariant,
    build_pseudo_stereo_volume,
    feature_clone,
    image_to_features,
)
from synthetic import default_calib, random_feature_map, random_image, rng_for, two_plane_scene


def _inputs(seed=0):
    calib = default_calib()
    rng = rng_for(seed)
    scene = two_plane_scene(32, 16, calib)
    return calib, scene, random_image(rng, 32, 16), random_feature_map(rng, 8, 4, 5)


def test_recommended_depth_switch_per_variant():
    assert RECOMMENDED_LAMBDA_DEPTH[PseudoStereoVariant.IMAGE_LEVEL] == 0
    assert RECOMMENDED_LAMBDA_DEPTH[PseudoStereoVariant.FEATURE_LEVEL] == 1
    assert RECOMMENDED_LAMBDA_DEPTH[PseudoStereoVariant.FEATURE_CLONE] == 1


def test_image_to_features_average_pools():
    image = RasterImage(np.array([[0.0, 1.0], [0.5, 0.5]]))
    pooled = image_to_features(image, 2)
    assert pooled.shape == (1, 1, 1)
    assert pooled.data[0, 0, 0] == 0.5
    with pytest.raises(DimensionError):
        image_to_features(RasterImage(np.zeros((3, 4))), 2)


def test_image_to_features_counts_holes_as_zero():
    holes = np.array([[False, True], [False, False]])
    image = RasterImage(np.array([[1.0, np.nan], [1.0, 1.0]]), holes)
    assert image_to_features(image, 2).data[0, 0, 0] == 0.75


def test_image_level_variant():
    calib, scene, image, _ = _inputs()
    result = build_pseudo_stereo_volume("image_level", calib, left_image=image, depth=scene.depth)
    assert result.variant == PseudoStereoVariant.IMAGE_LEVEL
    assert result.lambda_depth == 0
    assert result.virtual_image is not None and result.virtual_image.hole_mask.any()
    # zero-filled holes keep the pooled features finite
    assert np.all(np.isfinite(result.right.data))
    assert result.left.shape == (4, 8, 3)
    assert result.volume.channels == 6
    assert result.volume.num_levels == calib.num_depth_levels


def test_feature_level_variant_downsamples_disparity():
    calib, scene, _, f_left = _inputs(1)
    norm = DisparityNormalization(mu=3.0, sigma=2.0)
    result = build_pseudo_stereo_volume(PseudoStereoVariant.FEATURE_LEVEL, calib, f_left=f_left,
                                        depth=scene.depth, norm=norm)
    expected = generate_virtual_right_features(
        f_left, downsample_disparity(depth_map_to_disparity_map(scene.depth, calib), calib.stride), norm
    )
    assert result.right.equals(expected)
    assert result.left is f_left
    assert result.lambda_depth == 1
    assert result.volume.channels == 10


def test_feature_clone_variant_needs_no_depth():
    calib, _, _, f_left = _inputs(2)
    result = build_pseudo_stereo_volume(PseudoStereoVariant.FEATURE_CLONE, calib, f_left=f_left)
    assert result.right.equals(f_left)
    assert result.virtual_image is None
    pinned = feature_clone(f_left, calib.with_offset_override(0.0))
    assert np.array_equal(pinned.volume.left_half, pinned.volume.right_half)


def test_missing_inputs_rejected():
    calib, scene, image, f_left = _inputs()
    with pytest.raises(ValueError):
        build_pseudo_stereo_volume(PseudoStereoVariant.IMAGE_LEVEL, calib, left_image=image)
    with pytest.raises(ValueError):
        build_pseudo_stereo_volume(PseudoStereoVariant.FEATURE_LEVEL, calib, f_left=f_left)
    with pytest.raises(ValueError):
        build_pseudo_stereo_volume(PseudoStereoVariant.FEATURE_CLONE, calib, depth=scene.depth)
    with pytest.raises(ValueError):
        build_pseudo_stereo_volume("stereo", calib, f_left=f_left)


def main():
    from check_runner import run_tests
    return run_tests("PIPELINE TESTS", [
        test_recommended_depth_switch_per_variant,
        test_image_to_features_average_pools,
        test_image_to_features_counts_holes_as_zero,
        test_image_level_variant,
        test_feature_level_variant_downsamples_disparity,
        test_feature_clone_variant_needs_no_depth,
        test_missing_inputs_rejected,
    ])


if __name__ == "__main__":
    exit(main())
