"""
Tests for stereo volume construction, the softmax depth head and the losses
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent))

from core_types import DepthMap, FeatureMap, StereoCalib
from errors import DimensionError, DomainError
from geometry import depth_level
from stereo_volume import (
    DepthDistribution,
    LossDiagnostics,
    ScoreVolume,
    build_stereo_volume,
    combined_loss,
    depth_distribution,
    depth_loss,
    reproject_right,
    smooth_l1,
    soft_depth_regression,
)
from synthetic import default_calib, random_feature_map, random_scores, rng_for


def _calib(**overrides) -> StereoCalib:
    values = dict(focal_px=7.0, baseline_m=1.3, stride=1, z_min_m=2.0, depth_interval_m=0.7, num_depth_levels=5)
    values.update(overrides)
    return StereoCalib(**values)


def _scalar_volume(f_left, f_right, calib):
    h, w, c = f_left.shape
    out = np.zeros((h, w, calib.num_depth_levels, 2 * c))
    for level in range(calib.num_depth_levels):
        offset = calib.focal_px * calib.baseline_m / ((level * calib.depth_interval_m + calib.z_min_m) * calib.stride)
        for v in range(h):
            for u in range(w):
                x = u - offset
                x0 = math.floor(x)
                t = x - x0
                for ch in range(c):
                    out[v, u, level, ch] = f_left[v, u, ch]
                    right = 0.0
                    if 0 <= x0 < w:
                        right += (1 - t) * f_right[v, x0, ch]
                    if 0 <= x0 + 1 < w:
                        right += t * f_right[v, x0 + 1, ch]
                    out[v, u, level, c + ch] = right
    return out


# ============================================================================
# Volume
# ============================================================================

def test_volume_matches_scalar_oracle():
    rng = rng_for(0)
    calib = _calib()
    f_left, f_right = random_feature_map(rng, 6, 4, 2), random_feature_map(rng, 6, 4, 2)
    volume = build_stereo_volume(f_left, f_right, calib)
    assert (volume.height, volume.width, volume.num_levels, volume.channels) == (4, 6, 5, 4)
    assert np.max(np.abs(volume.data - _scalar_volume(f_left.data, f_right.data, calib))) <= 1e-12


def test_left_half_is_bit_equal_at_every_level():
    rng = rng_for(1)
    f_left = random_feature_map(rng, 9, 3, 3)
    volume = build_stereo_volume(f_left, random_feature_map(rng, 9, 3, 3), default_calib())
    for level in range(volume.num_levels):
        assert volume.left_half[:, :, level].tobytes() == f_left.data.tobytes()


def test_integer_offset_is_an_exact_shift():
    rng = rng_for(2)
    f_right = random_feature_map(rng, 8, 2, 2)
    # f*b / (z*S) = 8 / (2*2) = 2 at level 0
    calib = StereoCalib(focal_px=8.0, baseline_m=1.0, stride=2, z_min_m=2.0, depth_interval_m=1.0, num_depth_levels=1)
    shifted = reproject_right(f_right, calib, 0).data
    assert np.array_equal(shifted[:, 2:], f_right.data[:, :-2])
    assert np.all(shifted[:, :2] == 0.0)


def test_zero_offset_clone_volume_has_identical_halves():
    rng = rng_for(3)
    f_left = random_feature_map(rng, 5, 4, 3)
    volume = build_stereo_volume(f_left, f_left, default_calib().with_offset_override(0.0))
    assert volume.left_half.tobytes() == volume.right_half.tobytes()


def test_volume_depth_axis_follows_calib():
    rng = rng_for(4)
    f = random_feature_map(rng, 3, 3, 1)
    assert build_stereo_volume(f, f, default_calib(num_depth_levels=11)).num_levels == 11


def test_volume_shape_mismatch_rejected():
    rng = rng_for(5)
    with pytest.raises(DimensionError):
        build_stereo_volume(random_feature_map(rng, 3, 3, 2), random_feature_map(rng, 3, 3, 1), default_calib())


# ============================================================================
# Depth head
# ============================================================================

def test_distribution_sums_to_one():
    scores = ScoreVolume(random_scores(rng_for(6), 7, 5, 8, scale=30.0))
    dist = depth_distribution(scores)
    assert np.max(np.abs(dist.p.sum(axis=2) - 1.0)) <= 1e-9
    assert np.all(dist.p >= 0)


def test_distribution_survives_huge_scores():
    scores = np.zeros((1, 1, 3))
    scores[0, 0] = [1000.0, 999.0, -1000.0]
    p = depth_distribution(ScoreVolume(scores)).p[0, 0]
    assert np.all(np.isfinite(p))
    assert abs(p[0] - 1.0 / (1.0 + math.exp(-1.0))) <= 1e-12


def test_softmax_translation_invariance():
    calib = default_calib()
    scores = random_scores(rng_for(7), 4, 4, calib.num_depth_levels)
    a = soft_depth_regression(depth_distribution(ScoreVolume(scores)), calib)
    b = soft_depth_regression(depth_distribution(ScoreVolume(scores - 42.0)), calib)
    assert np.max(np.abs(a.z - b.z)) <= 1e-9


def test_one_hot_regresses_to_level_depth():
    calib = default_calib()
    for level in range(calib.num_depth_levels):
        p = np.zeros((2, 2, calib.num_depth_levels))
        p[:, :, level] = 1.0
        z = soft_depth_regression(DepthDistribution(p), calib).z
        assert np.all(z == depth_level(level, calib))


def test_uniform_regresses_to_mean_depth():
    calib = default_calib()
    p = np.full((1, 1, calib.num_depth_levels), 1.0 / calib.num_depth_levels)
    z = soft_depth_regression(DepthDistribution(p), calib).z[0, 0]
    assert abs(z - (calib.z_min_m + calib.z_max_m) / 2) <= 1e-12


def test_regressed_depth_stays_in_range():
    calib = default_calib()
    dist = depth_distribution(ScoreVolume(random_scores(rng_for(8), 9, 9, calib.num_depth_levels, scale=50.0)))
    z = soft_depth_regression(dist, calib).z
    assert np.all(z >= calib.z_min_m) and np.all(z <= calib.z_max_m)


def test_distribution_level_count_must_match():
    dist = depth_distribution(ScoreVolume(np.zeros((1, 1, 3))))
    with pytest.raises(DimensionError):
        soft_depth_regression(dist, default_calib())


def test_invalid_distribution_rejected():
    with pytest.raises(DomainError):
        DepthDistribution(np.full((1, 1, 2), 0.6))
    with pytest.raises(DomainError):
        ScoreVolume(np.full((1, 1, 2), np.nan))


# ============================================================================
# Losses
# ============================================================================

def test_smooth_l1_branches():
    values = smooth_l1(np.array([0.0, 0.5, -0.5, 1.0, 3.0, -3.0]))
    assert values.tolist() == [0.0, 0.125, 0.125, 0.5, 2.5, 2.5]


def test_depth_loss_zero_on_identity_and_masked():
    pred = DepthMap.from_array(np.array([[10.0, 12.0, 14.0]]))
    assert depth_loss(pred, pred) == 0.0
    gt = DepthMap(np.array([[10.0, 15.0, 14.0]]), np.array([[True, False, True]]))
    assert depth_loss(pred, gt) == 0.0
    gt_off = DepthMap.from_array(np.array([[10.5, 12.0, 17.0]]))
    assert depth_loss(pred, gt_off) == (0.125 + 0.0 + 2.5) / 3


def test_depth_loss_without_joint_pixels_counts_diagnostic():
    pred = DepthMap(np.array([[10.0]]), np.array([[False]]))
    diagnostics = LossDiagnostics()
    assert depth_loss(pred, pred, diagnostics) == 0.0
    assert diagnostics.empty_depth_loss == 1


def test_combined_loss_sum():
    assert combined_loss(1.0, 2.0, 3.0) == 6.0
    assert combined_loss(1.0, 2.0, 3.0, lambda_det=2.0, lambda_depth=0.5, lambda_kd=0.0) == 3.0


def test_depth_switch_off_ignores_depth_term():
    reference = combined_loss(0.3, 0.0, 0.9, lambda_depth=0)
    for value in rng_for(9).uniform(-1e9, 1e9, size=100):
        assert combined_loss(0.3, float(value), 0.9, lambda_depth=0) == reference


def test_strict_mode_depth_switch():
    assert combined_loss(1.0, 1.0, 1.0, lambda_depth=1, strict=True) == 3.0
    with pytest.raises(DomainError):
        combined_loss(1.0, 1.0, 1.0, lambda_depth=0.5, strict=True)


def test_non_finite_components_rejected():
    with pytest.raises(DomainError):
        combined_loss(float("nan"), 1.0, 1.0)
    with pytest.raises(DomainError):
        combined_loss(1.0, float("inf"), 1.0, lambda_depth=0)


def main():
    from check_runner import run_tests
    return run_tests("STEREO VOLUME TESTS", [
        test_volume_matches_scalar_oracle,
        test_left_half_is_bit_equal_at_every_level,
        test_integer_offset_is_an_exact_shift,
        test_zero_offset_clone_volume_has_identical_halves,
        test_volume_depth_axis_follows_calib,
        test_volume_shape_mismatch_rejected,
        test_distribution_sums_to_one,
        test_distribution_survives_huge_scores,
        test_softmax_translation_invariance,
        test_one_hot_regresses_to_level_depth,
        test_uniform_regresses_to_mean_depth,
        test_regressed_depth_stays_in_range,
        test_distribution_level_count_must_match,
        test_invalid_distribution_rejected,
        test_smooth_l1_branches,
        test_depth_loss_zero_on_identity_and_masked,
        test_depth_loss_without_joint_pixels_counts_diagnostic,
        test_combined_loss_sum,
        test_depth_switch_off_ignores_depth_term,
        test_strict_mode_depth_switch,
        test_non_finite_components_rejected,
    ])


if __name__ == "__main__":
    exit(main())
