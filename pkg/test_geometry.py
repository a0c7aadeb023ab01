"""
Tests for depth/disparity conversion, depth levels and reprojection offsets
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent))

from core_types import DepthMap, DisparityMap
from errors import DepthIndexError, DimensionError, DomainError
from geometry import (
    depth_level,
    depth_levels,
    depth_map_to_disparity_map,
    depth_to_disparity,
    disparity_map_to_depth_map,
    disparity_to_depth,
    downsample_disparity,
    reprojection_offset,
    reprojection_offsets,
)
from synthetic import default_calib


def test_depth_to_disparity_known_values():
    calib = default_calib()
    assert depth_to_disparity(10.0, calib) == 40.0
    assert depth_to_disparity(400.0, calib) == 1.0
    assert disparity_to_depth(40.0, calib) == 10.0


def test_round_trip_within_relative_tolerance():
    calib = default_calib(focal_px=721.5377, baseline_m=0.54)
    for z in np.linspace(1.0, 100.0, 991):
        back = disparity_to_depth(depth_to_disparity(float(z), calib), calib)
        assert abs(back - z) / z <= 1e-12


def test_conversion_rejects_non_positive_and_non_finite():
    calib = default_calib()
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(DomainError):
            depth_to_disparity(bad, calib)
        with pytest.raises(DomainError):
            disparity_to_depth(bad, calib)


def test_depth_levels_are_evenly_spaced_from_z_min():
    calib = default_calib(z_min_m=2.0, depth_interval_m=0.5, num_depth_levels=4)
    assert depth_levels(calib).tolist() == [2.0, 2.5, 3.0, 3.5]
    assert depth_level(3, calib) == calib.z_max_m


def test_depth_level_index_bounds():
    calib = default_calib(num_depth_levels=3)
    for bad in (-1, 3, 1.5):
        with pytest.raises(DepthIndexError):
            depth_level(bad, calib)
    with pytest.raises(IndexError):
        reprojection_offset(3, calib)


def test_reprojection_offset_formula_and_monotonicity():
    calib = default_calib()
    assert reprojection_offset(0, calib) == 400.0 / (10.0 * 4)
    offsets = reprojection_offsets(calib.model_copy(update={"num_depth_levels": 200}))
    assert np.all(np.diff(offsets) < 0)
    assert np.all(offsets > 0)


def test_offset_override_pins_every_level():
    calib = default_calib().with_offset_override(0.0)
    assert reprojection_offsets(calib).tolist() == [0.0] * calib.num_depth_levels
    # depths are unaffected
    assert depth_levels(calib).tolist() == depth_levels(default_calib()).tolist()


def test_map_conversions_propagate_mask():
    calib = default_calib()
    depth = DepthMap(np.array([[10.0, 20.0, 0.0]]), np.array([[True, True, False]]))
    disp = depth_map_to_disparity_map(depth, calib)
    assert disp.d.tolist() == [[40.0, 20.0, 0.0]]
    assert disp.valid.tolist() == [[True, True, False]]
    back = disparity_map_to_depth_map(disp, calib)
    assert back.z.tolist() == [[10.0, 20.0, 0.0]]
    assert np.array_equal(back.valid, depth.valid)


def test_zero_disparity_has_no_depth():
    with pytest.raises(DomainError):
        disparity_map_to_depth_map(DisparityMap.from_array(np.array([[0.0, 1.0]])), default_calib())


def test_downsample_disparity_averages_valid_pixels():
    d = np.array([
        [1.0, 3.0, 5.0, 5.0],
        [5.0, 7.0, 5.0, 5.0],
    ])
    valid = np.array([
        [True, True, False, False],
        [True, False, False, False],
    ])
    out = downsample_disparity(DisparityMap(d, valid), 2)
    assert out.shape == (1, 2)
    assert out.d.tolist() == [[3.0, 0.0]]
    assert out.valid.tolist() == [[True, False]]


def test_downsample_disparity_rejects_indivisible_shape():
    with pytest.raises(DimensionError):
        downsample_disparity(DisparityMap.from_array(np.ones((3, 4))), 2)
    same = DisparityMap.from_array(np.ones((3, 4)))
    assert downsample_disparity(same, 1) is same


def main():
    from check_runner import run_tests
    return run_tests("GEOMETRY TESTS", [
        test_depth_to_disparity_known_values,
        test_round_trip_within_relative_tolerance,
        test_conversion_rejects_non_positive_and_non_finite,
        test_depth_levels_are_evenly_spaced_from_z_min,
        test_depth_level_index_bounds,
        test_reprojection_offset_formula_and_monotonicity,
        test_offset_override_pins_every_level,
        test_map_conversions_propagate_mask,
        test_zero_disparity_has_no_depth,
        test_downsample_disparity_averages_valid_pixels,
        test_downsample_disparity_rejects_indivisible_shape,
    ])


if __name__ == "__main__":
    exit(main())
