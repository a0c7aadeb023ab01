#!/usr/bin/env python
"""
Pseudo-Stereo command line

Subcommands:
    warp       left image + depth -> virtual right image and hole mask
    ddc        left features + disparity -> virtual right features
    volume     left/right features -> stereo volume, per-half stats as TSV
    loss       composite training loss from its three components
    selfcheck  seeded invariant suite
    bench      naive vs. grid-shift DDC and warp timings

Exit codes: 0 success, 1 check failure, 2 usage or format error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

import io_formats
from benchmark import DEFAULT_SIZES, parse_sizes, run_benchmark
from core_types import StereoCalib
from ddc import DisparityNormalization, generate_virtual_right_features
from errors import PseudoStereoError, UsageError
from export_tool import ExportTool
from geometry import depth_map_to_disparity_map, downsample_disparity
from pipelines import PseudoStereoVariant, build_pseudo_stereo_volume
from selfcheck import run_selfcheck
from settings import configure_logging, get_settings
from stereo_volume import build_stereo_volume, combined_loss
from synthetic import default_calib, random_feature_map, random_image, rng_for, two_plane_scene
from view_synthesis import WarpConfig, synthesize_right_view

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

SYNTHETIC_FEATURE_SIZE = (12, 6, 8)
MIN_BENCH_RUNS = 10


# ============================================================================
# Path validation (runs before any compute)
# ============================================================================

def _require_inputs(**paths: Optional[Path]) -> None:
    for flag, path in paths.items():
        if path is None:
            raise UsageError(f"--{flag.replace('_', '-')} is required without --synthetic")
        if not path.is_file():
            raise UsageError(f"input file not found: {path} (--{flag.replace('_', '-')})")


def _require_outputs(*paths: Optional[Path]) -> None:
    for path in paths:
        if path is not None and not path.parent.is_dir():
            raise UsageError(f"output directory does not exist: {path.parent}")


def _print_table(lines: Sequence[str]) -> None:
    print("\n".join(lines))


# ============================================================================
# Subcommands
# ============================================================================

def cmd_warp(args: argparse.Namespace) -> int:
    _require_outputs(args.out_right, args.out_holes)
    if not args.synthetic:
        _require_inputs(left=args.left, depth=args.depth, calib=args.calib)

    config = WarpConfig(sobel_threshold=args.threshold, sharpen=args.sharpen)
    if args.synthetic:
        calib = default_calib()
        rng = rng_for(args.seed)
        scene = two_plane_scene(args.width, args.height, calib)
        depth = scene.depth
        left = random_image(rng, args.width, args.height)
    else:
        calib = io_formats.read_calib(args.calib)
        left = io_formats.read_image_pgm_ppm(args.left)
        depth = io_formats.read_depth_pfm(args.depth)

    right = synthesize_right_view(left, depth, calib, config)
    io_formats.write_image_pgm_ppm(right, args.out_right)
    try:
        io_formats.write_mask_pgm(right.hole_mask, args.out_holes)
    except Exception:
        args.out_right.unlink(missing_ok=True)
        raise

    holes = int(right.hole_mask.sum())
    print(f"[OK] Wrote {args.out_right} ({right.width}x{right.height}), {holes} hole pixels -> {args.out_holes}")
    return EXIT_OK


def cmd_ddc(args: argparse.Namespace) -> int:
    _require_outputs(args.out)
    if not args.synthetic:
        _require_inputs(features=args.features, disparity=args.disparity, calib=args.calib)

    norm = DisparityNormalization(mu=args.mu, sigma=args.sigma)
    if args.synthetic:
        calib = default_calib()
        rng = rng_for(args.seed)
        width, height, channels = SYNTHETIC_FEATURE_SIZE
        f_left = random_feature_map(rng, width, height, channels)
        scene = two_plane_scene(width * calib.stride, height * calib.stride, calib)
        disparity = depth_map_to_disparity_map(scene.depth, calib)
    else:
        calib = io_formats.read_calib(args.calib)
        f_left = io_formats.read_feature_map(args.features)
        disparity = io_formats.read_disparity_pfm(args.disparity)

    if disparity.shape != (f_left.height, f_left.width):
        disparity = downsample_disparity(disparity, calib.stride)
    f_right = generate_virtual_right_features(f_left, disparity, norm)
    io_formats.write_feature_map(f_right, args.out, dtype=args.dtype)

    print(f"[OK] Wrote {args.out} ({f_right.width}x{f_right.height}x{f_right.channels})")
    return EXIT_OK


def _half_stats(name: str, half: np.ndarray) -> str:
    return f"{name}\t{half.min():.17g}\t{half.max():.17g}\t{half.mean():.17g}"


def cmd_volume(args: argparse.Namespace) -> int:
    _require_outputs(args.out)
    if not args.synthetic:
        required = dict(left=args.left, calib=args.calib)
        if not args.clone:
            required["right"] = args.right
        _require_inputs(**required)

    if args.synthetic:
        calib = default_calib()
        if args.zero_offset:
            calib = calib.with_offset_override(0.0)
        volume = _synthetic_volume(args, calib)
    else:
        calib = io_formats.read_calib(args.calib)
        if args.zero_offset:
            calib = calib.with_offset_override(0.0)
        f_left = io_formats.read_feature_map(args.left)
        if args.clone:
            volume = build_pseudo_stereo_volume(PseudoStereoVariant.FEATURE_CLONE, calib, f_left=f_left).volume
        else:
            volume = build_stereo_volume(f_left, io_formats.read_feature_map(args.right), calib)

    io_formats.write_cost_volume(volume, args.out, dtype=args.dtype)
    _print_table([
        "volume\twidth\theight\tlevels\tchannels",
        f"shape\t{volume.width}\t{volume.height}\t{volume.num_levels}\t{volume.channels}",
        "half\tmin\tmax\tmean",
        _half_stats("left", volume.left_half),
        _half_stats("right", volume.right_half),
    ])
    return EXIT_OK


def _synthetic_volume(args: argparse.Namespace, calib: StereoCalib):
    """Run one of the three variants end to end on seeded data"""
    rng = rng_for(args.seed)
    width, height, channels = SYNTHETIC_FEATURE_SIZE
    variant = PseudoStereoVariant.FEATURE_CLONE if args.clone else PseudoStereoVariant(args.variant)
    scene = two_plane_scene(width * calib.stride, height * calib.stride, calib)

    result = build_pseudo_stereo_volume(
        variant,
        calib,
        left_image=random_image(rng, scene.depth.width, scene.depth.height),
        f_left=random_feature_map(rng, width, height, channels),
        depth=scene.depth,
        norm=DisparityNormalization(mu=args.mu, sigma=args.sigma),
    )
    print(f"[OK] {variant.value}: recommended lambda_depth={result.lambda_depth}", file=sys.stderr)
    return result.volume


def cmd_loss(args: argparse.Namespace) -> int:
    lambda_det, lambda_depth, lambda_kd = args.lambdas
    total = combined_loss(
        args.det, args.depth, args.kd,
        lambda_det=lambda_det, lambda_depth=lambda_depth, lambda_kd=lambda_kd,
        strict=args.strict,
    )
    _print_table(["loss", repr(total)])
    return EXIT_OK


def _export(report: dict, table: str, kind: str) -> None:
    """Write the report as JSON and its table as TSV to the results directory"""
    tool = ExportTool(get_settings().results_dir)
    header, *rows = [line.split("\t") for line in table.splitlines()]
    for result in (tool.export_to_json(report, kind=kind), tool.export_to_tsv(rows, header, kind=kind)):
        if result["success"]:
            print(f"[OK] Exported {kind} report to {result['filepath']}", file=sys.stderr)
        else:
            print(f"[ERROR] Export failed: {result['error']}", file=sys.stderr)


def cmd_selfcheck(args: argparse.Namespace) -> int:
    report = run_selfcheck(seed=args.seed, perturb_backward=args.perturb_backward)
    _print_table([report.to_tsv()])
    if args.export:
        _export(report.model_dump(), report.to_tsv(), "selfcheck")
    if not report.success:
        names = ", ".join(c.name for c in report.failed)
        print(f"[ERROR] Failed checks: {names}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if args.runs < MIN_BENCH_RUNS:
        raise UsageError(f"--runs must be at least {MIN_BENCH_RUNS}, got {args.runs}")
    sizes = parse_sizes(args.sizes)
    report = run_benchmark(sizes, runs=args.runs, warmups=args.warmups, seed=args.seed)
    _print_table([report.to_tsv()])
    if args.export:
        _export(report.model_dump(), report.to_tsv(), "bench")
    if not report.success:
        print("[ERROR] Naive and grid-shift DDC outputs differ", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================

def _add_synthetic(parser: argparse.ArgumentParser, seed: int) -> None:
    parser.add_argument("--synthetic", action="store_true", help="Use seeded synthetic inputs instead of files")
    parser.add_argument("--seed", type=int, default=seed, help="Seed for synthetic data")


def _add_normalization(parser: argparse.ArgumentParser, mu: float, sigma: float) -> None:
    parser.add_argument("--mu", type=float, default=mu, help="Disparity normalization mean")
    parser.add_argument("--sigma", type=float, default=sigma, help="Disparity normalization spread")


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="pseudo-stereo", description="Pseudo-Stereo virtual view toolkit")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default from env)")
    sub = parser.add_subparsers(dest="command", required=True)

    warp = sub.add_parser("warp", help="Forward-warp a left image into a virtual right view")
    warp.add_argument("--left", type=Path, help="Left image (PGM/PPM)")
    warp.add_argument("--depth", type=Path, help="Depth map (PFM)")
    warp.add_argument("--calib", type=Path, help="Calibration file")
    warp.add_argument("--out-right", type=Path, required=True, help="Virtual right image (PGM/PPM)")
    warp.add_argument("--out-holes", type=Path, required=True, help="Hole mask (PGM)")
    warp.add_argument("--sharpen", action=argparse.BooleanOptionalAction, default=True,
                      help="Sharpen flying pixels before warping")
    warp.add_argument("--threshold", type=float, default=settings.sobel_threshold, help="Sobel threshold")
    warp.add_argument("--width", type=int, default=48, help="Synthetic image width")
    warp.add_argument("--height", type=int, default=24, help="Synthetic image height")
    _add_synthetic(warp, settings.seed)
    warp.set_defaults(handler=cmd_warp)

    ddc = sub.add_parser("ddc", help="Virtual right features via disparity-wise dynamic convolution")
    ddc.add_argument("--features", type=Path, help="Left features (PSFM)")
    ddc.add_argument("--disparity", type=Path, help="Disparity map (PFM), full or feature resolution")
    ddc.add_argument("--calib", type=Path, help="Calibration file")
    ddc.add_argument("--out", type=Path, required=True, help="Virtual right features (PSFM)")
    ddc.add_argument("--dtype", choices=sorted(io_formats.PSFM_DTYPE_CODES), default="f64")
    _add_normalization(ddc, settings.disparity_mu, settings.disparity_sigma)
    _add_synthetic(ddc, settings.seed)
    ddc.set_defaults(handler=cmd_ddc)

    volume = sub.add_parser("volume", help="Build the stereo volume from left/right features")
    volume.add_argument("--left", type=Path, help="Left features (PSFM)")
    volume.add_argument("--right", type=Path, help="Right features (PSFM)")
    volume.add_argument("--calib", type=Path, help="Calibration file")
    volume.add_argument("--out", type=Path, required=True, help="Stereo volume (PSFM)")
    volume.add_argument("--dtype", choices=sorted(io_formats.PSFM_DTYPE_CODES), default="f64")
    volume.add_argument("--clone", action="store_true", help="Use a clone of the left features as the right")
    volume.add_argument("--zero-offset", action="store_true", help="Pin every reprojection offset to 0")
    volume.add_argument("--variant", choices=[v.value for v in PseudoStereoVariant],
                        default=PseudoStereoVariant.FEATURE_LEVEL.value, help="Pipeline for --synthetic")
    _add_normalization(volume, settings.disparity_mu, settings.disparity_sigma)
    _add_synthetic(volume, settings.seed)
    volume.set_defaults(handler=cmd_volume)

    loss = sub.add_parser("loss", help="Composite training loss")
    loss.add_argument("--det", type=float, required=True, help="Detection loss")
    loss.add_argument("--depth", type=float, required=True, help="Depth loss")
    loss.add_argument("--kd", type=float, required=True, help="Distillation loss")
    loss.add_argument("--lambdas", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                      metavar=("DET", "DEPTH", "KD"), help="Loss weights")
    loss.add_argument("--strict", action="store_true", help="Require the depth weight to be 0 or 1")
    loss.set_defaults(handler=cmd_loss)

    selfcheck = sub.add_parser("selfcheck", help="Run the invariant suite on seeded data")
    selfcheck.add_argument("--seed", type=int, default=settings.seed)
    selfcheck.add_argument("--export", action="store_true", help="Also write JSON and TSV reports to the results dir")
    selfcheck.add_argument("--perturb-backward", action="store_true", help=argparse.SUPPRESS)
    selfcheck.set_defaults(handler=cmd_selfcheck)

    bench = sub.add_parser("bench", help="Time naive vs. grid-shift DDC and the image warp")
    bench.add_argument("--sizes", default=DEFAULT_SIZES, help="Comma-separated WxHxC list")
    bench.add_argument("--runs", type=int, default=MIN_BENCH_RUNS,
                       help=f"Timed runs per path (at least {MIN_BENCH_RUNS})")
    bench.add_argument("--warmups", type=int, default=3)
    bench.add_argument("--seed", type=int, default=settings.seed)
    bench.add_argument("--export", action="store_true", help="Also write JSON and TSV reports to the results dir")
    bench.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        configure_logging(args.log_level)
    except ValueError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except PseudoStereoError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"[ERROR] invalid parameter: {e.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"[ERROR] I/O failure: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
