#!/usr/bin/env python
"""
Invariant suite run by `selfcheck`

Every check draws its data from one seeded generator and reports the largest
error it saw. The report holds no timings, so the same seed always gives the
same report.
"""
import logging
import math
import tempfile
import time
from pathlib import Path
from typing import Callable, List

import numpy as np
from pydantic import BaseModel, Field

import io_formats
from core_types import DepthMap, DisparityMap, FeatureMap, RasterImage, StereoCalib
from ddc import (
    DisparityNormalization,
    ddc_backward,
    ddc_forward_gridshift,
    ddc_forward_naive,
    normalize_disparity,
)
from errors import FormatError
from feature_clone import clone_features
from geometry import (
    depth_level,
    depth_to_disparity,
    disparity_to_depth,
    reprojection_offsets,
)
from gradcheck import finite_difference, relative_error
from stereo_volume import (
    DepthDistribution,
    ScoreVolume,
    build_stereo_volume,
    combined_loss,
    depth_distribution,
    depth_loss,
    soft_depth_regression,
)
from synthetic import constant_depth, default_calib, random_feature_map, random_image, rng_for, two_plane_scene
from view_synthesis import (
    WarpConfig,
    detect_flying_pixels,
    forward_warp,
    sharpen_disparity,
    sharpen_disparity_with_report,
    synthesize_right_view,
)

logger = logging.getLogger(__name__)

DDC_EQUIVALENCE_INSTANCES = 100
GRADIENT_INSTANCES = 20
GRADIENT_STEP = 1e-5
GRADIENT_TOLERANCE = 1e-6
FUZZ_ITERATIONS = 1000


class CheckResult(BaseModel):
    name: str
    passed: bool
    max_error: float = 0.0
    detail: str = ""


class SelfCheckReport(BaseModel):
    seed: int
    success: bool
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_tsv(self) -> str:
        lines = ["check\tmax_error\tstatus\tdetail"]
        for c in self.checks:
            lines.append(f"{c.name}\t{c.max_error:.3e}\t{'PASS' if c.passed else 'FAIL'}\t{c.detail}")
        return "\n".join(lines)


def _perturbed_backward(grad_out, f_left, f_disp):
    """Negative control: an adjoint that is off by 0.1 %"""
    grad_left, grad_disp = ddc_backward(grad_out, f_left, f_disp)
    return FeatureMap(grad_left.data * 1.001), grad_disp


# ============================================================================
# Checks
# ============================================================================

def check_ddc_equivalence(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    bit_exact = True
    for _ in range(DDC_EQUIVALENCE_INSTANCES):
        w, h, c = (int(v) for v in rng.integers(1, [17, 17, 9]))
        f_left = random_feature_map(rng, w, h, c)
        f_disp = random_feature_map(rng, w, h, c)
        naive = ddc_forward_naive(f_left, f_disp).data
        shifted = ddc_forward_gridshift(f_left, f_disp).data
        bit_exact &= naive.tobytes() == shifted.tobytes()
        scale = np.maximum(np.abs(naive), np.finfo(np.float64).tiny)
        worst = max(worst, float(np.max(np.abs(shifted - naive) / scale)))
    return CheckResult(
        name="ddc_equivalence",
        passed=bit_exact and worst <= 1e-12,
        max_error=worst,
        detail=f"{DDC_EQUIVALENCE_INSTANCES} instances, bit_exact={bit_exact}",
    )


def check_ddc_algebra(rng: np.random.Generator) -> CheckResult:
    w, h, c = 7, 6, 3
    x1, x2, y = (random_feature_map(rng, w, h, c) for _ in range(3))
    a = float(rng.uniform(-3, 3))
    base = ddc_forward_gridshift(x1, y).data

    errors = [
        np.max(np.abs(ddc_forward_gridshift(FeatureMap(a * x1.data), y).data - a * base)),
        np.max(np.abs(
            ddc_forward_gridshift(FeatureMap(x1.data + x2.data), y).data
            - (base + ddc_forward_gridshift(x2, y).data)
        )),
    ]
    symmetric = ddc_forward_gridshift(y, x1).data.tobytes() == base.tobytes()

    # a single changed input only reaches outputs within Chebyshev distance 1
    poked = np.array(x1.data)
    r, q = int(rng.integers(h)), int(rng.integers(w))
    poked[r, q] += 1.0
    changed = np.any(ddc_forward_gridshift(FeatureMap(poked), y).data != base, axis=2)
    rows, cols = np.nonzero(changed)
    local = bool(np.all(np.abs(rows - r) <= 1) and np.all(np.abs(cols - q) <= 1))

    worst = float(max(errors))
    return CheckResult(
        name="ddc_algebra",
        passed=worst <= 1e-12 and symmetric and local,
        max_error=worst,
        detail=f"symmetric={symmetric} local={local}",
    )


def check_ddc_gradient(rng: np.random.Generator, perturb_backward: bool = False) -> CheckResult:
    backward = _perturbed_backward if perturb_backward else ddc_backward
    worst = 0.0
    for _ in range(GRADIENT_INSTANCES):
        f_left = random_feature_map(rng, 5, 5, 2)
        f_disp = random_feature_map(rng, 5, 5, 2)
        grad_out = random_feature_map(rng, 5, 5, 2)
        grad_left, grad_disp = backward(grad_out, f_left, f_disp)

        def loss_wrt_left(x):
            return float(np.sum(grad_out.data * ddc_forward_gridshift(FeatureMap(x), f_disp).data))

        def loss_wrt_disp(x):
            return float(np.sum(grad_out.data * ddc_forward_gridshift(f_left, FeatureMap(x)).data))

        numeric_left = finite_difference(loss_wrt_left, f_left.data, GRADIENT_STEP)
        numeric_disp = finite_difference(loss_wrt_disp, f_disp.data, GRADIENT_STEP)
        worst = max(
            worst,
            relative_error(grad_left.data, numeric_left),
            relative_error(grad_disp.data, numeric_disp),
        )
    return CheckResult(
        name="ddc_gradient",
        passed=worst <= GRADIENT_TOLERANCE,
        max_error=worst,
        detail=f"{GRADIENT_INSTANCES} instances, h={GRADIENT_STEP}" + (", perturbed" if perturb_backward else ""),
    )


def check_warp_shift(rng: np.random.Generator) -> CheckResult:
    calib = default_calib()
    w, h, k = 12, 6, 3
    left = random_image(rng, w, h)
    right = synthesize_right_view(left, constant_depth(w, h, calib.focal_baseline / k), calib)

    expected_holes = np.zeros((h, w), dtype=bool)
    expected_holes[:, w - k:] = True
    shifted_ok = np.array_equal(right.intensities[:, : w - k], left.intensities[:, k:])
    holes_ok = np.array_equal(right.hole_mask, expected_holes)

    identity = forward_warp(left, DisparityMap.from_array(np.zeros((h, w))))
    identity_ok = np.array_equal(identity.intensities, left.intensities) and not identity.hole_mask.any()
    return CheckResult(
        name="warp_shift",
        passed=shifted_ok and holes_ok and identity_ok,
        detail=f"shift={shifted_ok} holes={holes_ok} identity={identity_ok}",
    )


def check_warp_conservation(rng: np.random.Generator) -> CheckResult:
    calib = default_calib()
    w, h = 24, 5
    scene = two_plane_scene(w, h, calib)
    left = random_image(rng, w, h)
    right = synthesize_right_view(left, scene.depth, calib)

    conserved = True
    for row in range(h):
        sources = {tuple(px) for px in left.intensities[row]}
        for col in np.flatnonzero(~right.hole_mask[row]):
            conserved &= tuple(right.intensities[row, col]) in sources

    band_start = scene.strip_stop - scene.near_disparity
    band = right.hole_mask[:, band_start: band_start + scene.near_disparity - scene.far_disparity]
    band_ok = bool(band.all()) and not right.hole_mask[:, band_start - 1].any()
    return CheckResult(
        name="warp_conservation",
        passed=conserved and band_ok,
        detail=f"conserved={conserved} disocclusion_band={band_ok}",
    )


def check_warp_collision(rng: np.random.Generator) -> CheckResult:
    left = RasterImage(np.array([[[0.1], [0.5], [0.9]]]))
    disp = DisparityMap(np.array([[0.0, 1.0, 2.0]]), np.array([[False, True, True]]))
    right = forward_warp(left, disp)
    ok = right.intensities[0, 0, 0] == 0.9 and not right.hole_mask[0, 0] and right.hole_mask[0, 1:].all()
    return CheckResult(name="warp_collision", passed=bool(ok), detail="two sources onto column 0")


def check_sharpening(rng: np.random.Generator) -> CheckResult:
    config = WarpConfig()
    constant = DisparityMap.from_array(np.full((5, 5), 7.0))
    none_flagged = not detect_flying_pixels(constant, config).any()

    step = np.zeros((5, 5))
    step[:, 3:] = 1.0
    flagged = detect_flying_pixels(DisparityMap.from_array(step), config)
    expected = np.zeros((5, 5), dtype=bool)
    expected[:, 2:4] = True
    step_ok = np.array_equal(flagged, expected)

    noisy = DisparityMap.from_array(rng.uniform(1, 40, size=(8, 10)))
    ramp = DisparityMap.from_array(np.tile([2.0, 2.0, 2.0, 4.0, 6.0, 8.0, 8.0, 8.0], (5, 1)))
    idempotent = True
    untouched = True
    converged = 0
    for disp in (noisy, ramp):
        once, report = sharpen_disparity_with_report(disp, detect_flying_pixels(disp, config), config)
        untouched = untouched and np.array_equal(once.d[~report.flagged], disp.d[~report.flagged])
        if not report.converged:
            continue
        converged += 1
        twice = sharpen_disparity(once, detect_flying_pixels(once, config), config)
        idempotent = idempotent and once.equals(twice)
    idempotent = idempotent and converged > 0
    return CheckResult(
        name="sharpening",
        passed=none_flagged and step_ok and idempotent and untouched,
        detail=(
            f"constant={none_flagged} step={step_ok} idempotent={idempotent} "
            f"converged={converged}/2 outside_flagged={untouched}"
        ),
    )


def _volume_oracle(f_left: np.ndarray, f_right: np.ndarray, calib: StereoCalib) -> np.ndarray:
    h, w, c = f_left.shape
    out = np.zeros((h, w, calib.num_depth_levels, 2 * c))
    for level in range(calib.num_depth_levels):
        z = level * calib.depth_interval_m + calib.z_min_m
        offset = calib.focal_px * calib.baseline_m / (z * calib.stride)
        for v in range(h):
            for u in range(w):
                source = u - offset
                s0 = math.floor(source)
                t = source - s0
                for ch in range(c):
                    out[v, u, level, ch] = f_left[v, u, ch]
                    value = 0.0
                    if 0 <= s0 < w:
                        value += (1 - t) * f_right[v, s0, ch]
                    if 0 <= s0 + 1 < w and t > 0:
                        value += t * f_right[v, s0 + 1, ch]
                    out[v, u, level, c + ch] = value
    return out


def check_volume_oracle(rng: np.random.Generator) -> CheckResult:
    calib = StereoCalib(focal_px=7.0, baseline_m=1.3, stride=1, z_min_m=2.0, depth_interval_m=0.7, num_depth_levels=5)
    f_left = random_feature_map(rng, 6, 4, 2)
    f_right = random_feature_map(rng, 6, 4, 2)
    volume = build_stereo_volume(f_left, f_right, calib)
    oracle = _volume_oracle(f_left.data, f_right.data, calib)
    worst = float(np.max(np.abs(volume.data - oracle)))
    left_exact = all(
        volume.left_half[:, :, level].tobytes() == f_left.data.tobytes() for level in range(calib.num_depth_levels)
    )
    return CheckResult(
        name="volume_oracle",
        passed=worst <= 1e-12 and left_exact,
        max_error=worst,
        detail=f"6x4x2, N_d=5, left_half_exact={left_exact}",
    )


def check_depth_head(rng: np.random.Generator) -> CheckResult:
    calib = default_calib()
    scores = rng.normal(0, 3, size=(4, 5, calib.num_depth_levels))
    dist = depth_distribution(ScoreVolume(scores))
    sum_error = float(np.max(np.abs(dist.p.sum(axis=2) - 1.0)))

    regressed = soft_depth_regression(dist, calib)
    in_bounds = bool(np.all(regressed.z >= calib.z_min_m) and np.all(regressed.z <= calib.z_max_m))

    shifted = soft_depth_regression(depth_distribution(ScoreVolume(scores + 11.5)), calib)
    shift_error = float(np.max(np.abs(shifted.z - regressed.z)))

    one_hot_ok = True
    for level in range(calib.num_depth_levels):
        p = np.zeros((1, 1, calib.num_depth_levels))
        p[0, 0, level] = 1.0
        one_hot_ok &= bool(soft_depth_regression(DepthDistribution(p), calib).z[0, 0] == depth_level(level, calib))

    zero_loss = depth_loss(regressed, regressed) == 0.0
    worst = max(sum_error, shift_error)
    return CheckResult(
        name="depth_head",
        passed=sum_error <= 1e-9 and shift_error <= 1e-9 and in_bounds and one_hot_ok and zero_loss,
        max_error=worst,
        detail=f"bounds={in_bounds} one_hot={one_hot_ok} zero_loss={zero_loss}",
    )


def check_geometry(rng: np.random.Generator) -> CheckResult:
    calib = default_calib()
    worst = 0.0
    for z in np.linspace(1.0, 100.0, 199):
        back = disparity_to_depth(depth_to_disparity(float(z), calib), calib)
        worst = max(worst, abs(back - z) / z)
    offsets = reprojection_offsets(calib.model_copy(update={"num_depth_levels": 64}))
    decreasing = bool(np.all(np.diff(offsets) < 0))

    norm = DisparityNormalization()
    probe = DisparityMap.from_array(np.array([[33.20, 49.11]]))
    normalized = normalize_disparity(probe, norm).data[0, :, 0]
    norm_error = float(max(abs(normalized[0]), abs(normalized[1] - 1.0)))
    worst = max(worst, norm_error)
    return CheckResult(
        name="geometry",
        passed=worst <= 1e-12 and decreasing,
        max_error=worst,
        detail=f"offsets_decreasing={decreasing}",
    )


def check_loss_composition(rng: np.random.Generator) -> CheckResult:
    exact = combined_loss(1.0, 2.0, 3.0) == 6.0
    reference = combined_loss(0.7, 0.0, 0.2, lambda_depth=0, strict=True)
    invariant = all(
        combined_loss(0.7, float(v), 0.2, lambda_depth=0, strict=True) == reference
        for v in rng.uniform(-1e6, 1e6, size=50)
    )
    return CheckResult(name="loss_composition", passed=exact and invariant, detail=f"sum={exact} switch={invariant}")


def check_io_roundtrip(rng: np.random.Generator) -> CheckResult:
    calib = default_calib()
    ok = {}
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)

        depth = DepthMap.from_array(rng.uniform(1, 80, size=(5, 7)).astype(np.float32))
        io_formats.write_depth_pfm(depth, tmp / "depth.pfm")
        ok["pfm"] = io_formats.read_depth_pfm(tmp / "depth.pfm").z.tobytes() == depth.z.tobytes()

        image = random_image(rng, 9, 4)
        io_formats.write_image_pgm_ppm(image, tmp / "image.ppm")
        ok["ppm"] = np.array_equal(io_formats.read_image_pgm_ppm(tmp / "image.ppm").intensities, image.intensities)

        io_formats.write_calib(calib, tmp / "calib.txt")
        ok["calib"] = io_formats.read_calib(tmp / "calib.txt") == calib

        feature = random_feature_map(rng, 6, 3, 4)
        io_formats.write_feature_map(feature, tmp / "feature.psfm")
        ok["psfm"] = io_formats.read_feature_map(tmp / "feature.psfm").content_hash() == feature.content_hash()

    clean = io_formats.encode_feature_map(random_feature_map(rng, 3, 2, 2))
    structured = True
    for _ in range(FUZZ_ITERATIONS):
        blob = bytearray(clean)
        for index in rng.integers(0, len(blob), size=int(rng.integers(1, 6))):
            blob[index] = int(rng.integers(0, 256))
        blob = bytes(blob[: int(rng.integers(0, len(blob) + 1))])
        for parser in (io_formats.parse_feature_map, io_formats.parse_pfm, io_formats.parse_calib):
            try:
                parser(blob)
            except FormatError:
                pass
            except Exception as e:
                structured = False
                logger.error(f"{parser.__name__} raised {type(e).__name__}: {e}")

    passed = all(ok.values()) and structured
    detail = " ".join(f"{k}={v}" for k, v in ok.items()) + f" fuzz_structured={structured}"
    return CheckResult(name="io_roundtrip", passed=passed, detail=detail)


def check_clone(rng: np.random.Generator) -> CheckResult:
    f_left = random_feature_map(rng, 8, 4, 3)
    cloned = clone_features(f_left)
    distinct = not np.shares_memory(cloned.data, f_left.data)
    equal = cloned.equals(f_left) and clone_features(cloned).equals(f_left)
    volume = build_stereo_volume(f_left, cloned, default_calib(num_depth_levels=3).with_offset_override(0.0))
    halves = volume.left_half.tobytes() == volume.right_half.tobytes()
    return CheckResult(
        name="feature_clone",
        passed=distinct and equal and halves,
        detail=f"equal={equal} distinct={distinct} halves_equal={halves}",
    )


CHECKS: List[Callable[[np.random.Generator], CheckResult]] = [
    check_ddc_equivalence,
    check_ddc_algebra,
    check_ddc_gradient,
    check_warp_shift,
    check_warp_conservation,
    check_warp_collision,
    check_sharpening,
    check_volume_oracle,
    check_depth_head,
    check_geometry,
    check_loss_composition,
    check_io_roundtrip,
    check_clone,
]


def run_selfcheck(seed: int = 0, perturb_backward: bool = False) -> SelfCheckReport:
    """Run every check on data drawn from `seed`"""
    rng = rng_for(seed)
    started = time.perf_counter()
    results = []
    for check in CHECKS:
        if check is check_ddc_gradient:
            result = check(rng, perturb_backward=perturb_backward)
        else:
            result = check(rng)
        log = logger.info if result.passed else logger.error
        log(f"{result.name}: {'PASS' if result.passed else 'FAIL'} max_error={result.max_error:.3e} {result.detail}")
        results.append(result)

    logger.info(f"Self-check finished in {time.perf_counter() - started:.2f}s")
    return SelfCheckReport(seed=seed, success=all(r.passed for r in results), checks=results)
