"""
Tests for the pseudo-stereo command line: exit codes, outputs, validation
"""
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent))

import io_formats
from core_types import DisparityMap
from ddc import ddc_forward_naive, normalize_disparity, broadcast_channels, DisparityNormalization
from pseudo_stereo_cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, main as run_cli
from settings import reload_settings
from synthetic import constant_depth, default_calib, random_feature_map, random_image, rng_for


def _write_rig(tmp_path: Path, width=12, height=6, k=3):
    calib = default_calib()
    io_formats.write_calib(calib, tmp_path / "calib.txt")
    left = random_image(rng_for(0), width, height)
    io_formats.write_image_pgm_ppm(left, tmp_path / "left.ppm")
    # f*b / k is exact in float32 for these k
    io_formats.write_depth_pfm(constant_depth(width, height, calib.focal_baseline / k), tmp_path / "depth.pfm")
    return calib, left


# ============================================================================
# warp
# ============================================================================

def test_warp_constant_depth_shifts_image(tmp_path):
    _, left = _write_rig(tmp_path, k=4)
    code = run_cli([
        "warp", "--left", str(tmp_path / "left.ppm"), "--depth", str(tmp_path / "depth.pfm"),
        "--calib", str(tmp_path / "calib.txt"),
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_OK
    right = io_formats.read_image_pgm_ppm(tmp_path / "right.ppm")
    holes = io_formats.read_image_pgm_ppm(tmp_path / "holes.pgm").intensities[:, :, 0] == 1.0
    assert np.array_equal(right.intensities[:, :8], left.intensities[:, 4:])
    assert holes[:, 8:].all() and not holes[:, :8].any()
    assert np.all(right.intensities[:, 8:] == 0.0)


def test_warp_missing_calib_key_exits_2(tmp_path, capsys):
    _write_rig(tmp_path)
    text = (tmp_path / "calib.txt").read_text().replace("z_min_m", "# z_min_m")
    (tmp_path / "calib.txt").write_text(text)
    code = run_cli([
        "warp", "--left", str(tmp_path / "left.ppm"), "--depth", str(tmp_path / "depth.pfm"),
        "--calib", str(tmp_path / "calib.txt"),
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_USAGE
    assert "z_min_m" in capsys.readouterr().err
    assert not (tmp_path / "right.ppm").exists()


def test_warp_paths_validated_before_compute(tmp_path, capsys):
    code = run_cli([
        "warp", "--left", str(tmp_path / "nope.ppm"), "--depth", str(tmp_path / "nope.pfm"),
        "--calib", str(tmp_path / "nope.txt"),
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_USAGE
    assert "nope.ppm" in capsys.readouterr().err

    code = run_cli([
        "warp", "--synthetic",
        "--out-right", str(tmp_path / "no_dir" / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_USAGE
    assert not (tmp_path / "holes.pgm").exists()


def test_warp_failed_hole_write_removes_right_image(tmp_path):
    _write_rig(tmp_path)
    # a directory where the hole mask should go makes the second write fail
    (tmp_path / "holes.pgm").mkdir()
    code = run_cli([
        "warp", "--left", str(tmp_path / "left.ppm"), "--depth", str(tmp_path / "depth.pfm"),
        "--calib", str(tmp_path / "calib.txt"),
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_USAGE
    assert not (tmp_path / "right.ppm").exists()


def test_warp_huge_depth_level_count_exits_2(tmp_path, capsys):
    _write_rig(tmp_path)
    text = (tmp_path / "calib.txt").read_text()
    lines = [line for line in text.splitlines() if not line.startswith("num_depth_levels")]
    (tmp_path / "calib.txt").write_text("\n".join(lines + ["num_depth_levels = 1e12"]) + "\n")
    code = run_cli([
        "warp", "--left", str(tmp_path / "left.ppm"), "--depth", str(tmp_path / "depth.pfm"),
        "--calib", str(tmp_path / "calib.txt"),
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_USAGE
    assert "num_depth_levels" in capsys.readouterr().err
    assert not (tmp_path / "right.ppm").exists()


def test_warp_synthetic_runs(tmp_path):
    code = run_cli([
        "warp", "--synthetic", "--seed", "3", "--no-sharpen",
        "--out-right", str(tmp_path / "right.ppm"), "--out-holes", str(tmp_path / "holes.pgm"),
    ])
    assert code == EXIT_OK
    assert io_formats.read_image_pgm_ppm(tmp_path / "right.ppm").shape == (24, 48, 3)


# ============================================================================
# ddc
# ============================================================================

def test_ddc_disparity_at_mu_writes_zeros(tmp_path):
    calib = default_calib()
    io_formats.write_calib(calib, tmp_path / "calib.txt")
    io_formats.write_feature_map(random_feature_map(rng_for(1), 3, 2, 4), tmp_path / "f.psfm")
    io_formats.write_disparity_pfm(DisparityMap.from_array(np.full((8, 12), 32.0)), tmp_path / "d.pfm")
    code = run_cli([
        "ddc", "--features", str(tmp_path / "f.psfm"), "--disparity", str(tmp_path / "d.pfm"),
        "--calib", str(tmp_path / "calib.txt"), "--out", str(tmp_path / "out.psfm"), "--mu", "32",
    ])
    assert code == EXIT_OK
    out = io_formats.read_feature_map(tmp_path / "out.psfm")
    assert out.shape == (2, 3, 4)
    assert np.all(out.data == 0.0)


def test_ddc_matches_naive_path(tmp_path):
    calib = default_calib(stride=1)
    io_formats.write_calib(calib, tmp_path / "calib.txt")
    features = random_feature_map(rng_for(2), 5, 4, 3)
    disp = DisparityMap.from_array(rng_for(3).uniform(1, 60, size=(4, 5)).astype(np.float32))
    io_formats.write_feature_map(features, tmp_path / "f.psfm")
    io_formats.write_disparity_pfm(disp, tmp_path / "d.pfm")
    code = run_cli([
        "ddc", "--features", str(tmp_path / "f.psfm"), "--disparity", str(tmp_path / "d.pfm"),
        "--calib", str(tmp_path / "calib.txt"), "--out", str(tmp_path / "out.psfm"),
    ])
    assert code == EXIT_OK
    kernels = broadcast_channels(normalize_disparity(disp, DisparityNormalization()), 3)
    assert io_formats.read_feature_map(tmp_path / "out.psfm").equals(ddc_forward_naive(features, kernels))


def test_ddc_resolution_mismatch_exits_2(tmp_path):
    io_formats.write_calib(default_calib(), tmp_path / "calib.txt")
    io_formats.write_feature_map(random_feature_map(rng_for(1), 3, 2, 4), tmp_path / "f.psfm")
    io_formats.write_disparity_pfm(DisparityMap.from_array(np.ones((8, 16))), tmp_path / "d.pfm")
    code = run_cli([
        "ddc", "--features", str(tmp_path / "f.psfm"), "--disparity", str(tmp_path / "d.pfm"),
        "--calib", str(tmp_path / "calib.txt"), "--out", str(tmp_path / "out.psfm"),
    ])
    assert code == EXIT_USAGE
    assert not (tmp_path / "out.psfm").exists()


def test_ddc_corrupt_magic_names_offset(tmp_path, capsys):
    io_formats.write_calib(default_calib(), tmp_path / "calib.txt")
    (tmp_path / "f.psfm").write_bytes(b"JUNK" + bytes(40))
    io_formats.write_disparity_pfm(DisparityMap.from_array(np.ones((8, 12))), tmp_path / "d.pfm")
    code = run_cli([
        "ddc", "--features", str(tmp_path / "f.psfm"), "--disparity", str(tmp_path / "d.pfm"),
        "--calib", str(tmp_path / "calib.txt"), "--out", str(tmp_path / "out.psfm"),
    ])
    assert code == EXIT_USAGE
    assert "offset=0" in capsys.readouterr().err


def test_ddc_bad_sigma_exits_2(tmp_path):
    code = run_cli(["ddc", "--synthetic", "--sigma", "0", "--out", str(tmp_path / "out.psfm")])
    assert code == EXIT_USAGE


# ============================================================================
# volume
# ============================================================================

def _volume_stats(output: str):
    rows = {line.split("\t")[0]: line.split("\t")[1:] for line in output.strip().splitlines()}
    return rows


def test_volume_clone_zero_offset_has_identical_half_stats(tmp_path, capsys):
    io_formats.write_calib(default_calib(num_depth_levels=6), tmp_path / "calib.txt")
    io_formats.write_feature_map(random_feature_map(rng_for(4), 5, 3, 2), tmp_path / "l.psfm")
    code = run_cli([
        "volume", "--left", str(tmp_path / "l.psfm"), "--calib", str(tmp_path / "calib.txt"),
        "--clone", "--zero-offset", "--out", str(tmp_path / "v.psfm"),
    ])
    assert code == EXIT_OK
    rows = _volume_stats(capsys.readouterr().out)
    assert rows["left"] == rows["right"]
    assert rows["shape"] == ["5", "3", "6", "4"]
    assert io_formats.read_cost_volume(tmp_path / "v.psfm").num_levels == 6


def test_volume_shape_mismatch_exits_2(tmp_path):
    io_formats.write_calib(default_calib(), tmp_path / "calib.txt")
    io_formats.write_feature_map(random_feature_map(rng_for(4), 5, 3, 2), tmp_path / "l.psfm")
    io_formats.write_feature_map(random_feature_map(rng_for(5), 5, 3, 1), tmp_path / "r.psfm")
    code = run_cli([
        "volume", "--left", str(tmp_path / "l.psfm"), "--right", str(tmp_path / "r.psfm"),
        "--calib", str(tmp_path / "calib.txt"), "--out", str(tmp_path / "v.psfm"),
    ])
    assert code == EXIT_USAGE


def test_volume_synthetic_variants(tmp_path):
    for variant in ("image_level", "feature_level", "feature_clone"):
        out = tmp_path / f"{variant}.psfm"
        assert run_cli(["volume", "--synthetic", "--variant", variant, "--out", str(out)]) == EXIT_OK
        assert io_formats.read_cost_volume(out).num_levels == default_calib().num_depth_levels


# ============================================================================
# loss / selfcheck / bench
# ============================================================================

def test_loss_command(capsys):
    assert run_cli(["loss", "--det", "1", "--depth", "2", "--kd", "3"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines() == ["loss", "6.0"]
    assert run_cli(["loss", "--det", "1", "--depth", "2", "--kd", "3", "--lambdas", "1", "0.5", "1", "--strict"]) \
        == EXIT_USAGE


def test_selfcheck_exit_codes(capsys):
    assert run_cli(["selfcheck", "--seed", "0"]) == EXIT_OK
    first = capsys.readouterr().out
    assert run_cli(["selfcheck", "--seed", "0"]) == EXIT_OK
    assert capsys.readouterr().out == first

    assert run_cli(["selfcheck", "--seed", "0", "--perturb-backward"]) == EXIT_CHECK_FAILED
    assert "ddc_gradient" in capsys.readouterr().err


def test_bench_command(capsys):
    assert run_cli(["bench", "--sizes", "4x4x2", "--runs", "10", "--warmups", "0"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("size\tpath")
    assert all(line.endswith("True") for line in out[1:])


def test_bench_needs_at_least_ten_runs(capsys):
    assert run_cli(["bench", "--sizes", "4x4x2", "--runs", "5", "--warmups", "0"]) == EXIT_USAGE
    err = capsys.readouterr()
    assert "--runs" in err.err
    assert err.out == ""


def test_selfcheck_export_writes_json_and_tsv(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PSEUDO_STEREO_RESULTS_DIR", str(tmp_path / "results"))
    try:
        reload_settings()
        assert run_cli(["selfcheck", "--seed", "0", "--export"]) == EXIT_OK
    finally:
        monkeypatch.undo()
        reload_settings()
    table = capsys.readouterr().out.strip().splitlines()
    assert len(list((tmp_path / "results").glob("selfcheck_*.json"))) == 1
    exported = list((tmp_path / "results").glob("selfcheck_*.tsv"))
    assert len(exported) == 1
    lines = exported[0].read_text().strip().splitlines()
    assert lines[0] == "check\tmax_error\tstatus\tdetail"
    assert len(lines) == len(table)
    assert [line.split("\t")[0] for line in lines] == [line.split("\t")[0] for line in table]


def test_bench_empty_sizes_is_usage_error():
    assert run_cli(["bench", "--sizes", ""]) == EXIT_USAGE


def test_unknown_command_is_usage_error():
    assert run_cli(["teleport"]) == EXIT_USAGE
    assert run_cli([]) == EXIT_USAGE


def main():
    from check_runner import run_tests
    return run_tests("CLI TESTS", [
        test_warp_constant_depth_shifts_image,
        test_warp_missing_calib_key_exits_2,
        test_warp_paths_validated_before_compute,
        test_warp_failed_hole_write_removes_right_image,
        test_warp_huge_depth_level_count_exits_2,
        test_warp_synthetic_runs,
        test_ddc_disparity_at_mu_writes_zeros,
        test_ddc_matches_naive_path,
        test_ddc_resolution_mismatch_exits_2,
        test_ddc_corrupt_magic_names_offset,
        test_ddc_bad_sigma_exits_2,
        test_volume_clone_zero_offset_has_identical_half_stats,
        test_volume_shape_mismatch_exits_2,
        test_volume_synthetic_variants,
        test_loss_command,
        test_selfcheck_exit_codes,
        test_bench_command,
        test_bench_needs_at_least_ten_runs,
        test_selfcheck_export_writes_json_and_tsv,
        test_bench_empty_sizes_is_usage_error,
        test_unknown_command_is_usage_error,
    ])


if __name__ == "__main__":
    exit(main())
