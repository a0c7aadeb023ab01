#!/usr/bin/env python
"""
Wall-clock comparison of the generation paths

For each W x H x C size: naive sliding-window DDC, grid-shift DDC and the
image-level warp (sharpening included) on a two-plane scene of the same
W x H. Each is timed over `runs` repetitions after `warmups` untimed ones.
"""
import logging
import re
import time
from typing import Callable, Iterable, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ddc import ddc_forward_gridshift, ddc_forward_naive
from errors import DomainError
from synthetic import default_calib, random_feature_map, random_image, rng_for, two_plane_scene
from view_synthesis import synthesize_right_view

logger = logging.getLogger(__name__)

Size = Tuple[int, int, int]

SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*[xX]\s*(\d+)\s*$")
DEFAULT_SIZES = "64x64x8"
MIN_WARP_SIDE = 3


class Timing(BaseModel):
    mean_s: float
    std_s: float


class BenchmarkRow(BaseModel):
    width: int
    height: int
    channels: int
    naive_ddc: Timing
    gridshift_ddc: Timing
    warp: Timing
    outputs_equal: bool
    gridshift_faster: bool = Field(description="Direction of the comparison, reported rather than asserted")

    @property
    def label(self) -> str:
        return f"{self.width}x{self.height}x{self.channels}"


class BenchmarkReport(BaseModel):
    success: bool
    runs: int
    warmups: int
    rows: List[BenchmarkRow] = Field(default_factory=list)

    def to_tsv(self) -> str:
        lines = ["size\tpath\tmean_ms\tstd_ms\toutputs_equal"]
        for row in self.rows:
            for path, timing in (("naive_ddc", row.naive_ddc), ("gridshift_ddc", row.gridshift_ddc), ("warp", row.warp)):
                lines.append(
                    f"{row.label}\t{path}\t{timing.mean_s * 1e3:.3f}\t{timing.std_s * 1e3:.3f}\t{row.outputs_equal}"
                )
        return "\n".join(lines)


def parse_sizes(sizes: Union[str, Iterable[str]]) -> List[Size]:
    """'64x64x8,128x128x16' (or a list of such tokens) -> [(W, H, C), ...]"""
    if isinstance(sizes, str):
        tokens = [t for t in sizes.split(",") if t.strip()]
    else:
        tokens = [t for t in sizes if t.strip()]
    if not tokens:
        raise DomainError("size list is empty")

    parsed = []
    for token in tokens:
        match = SIZE_PATTERN.match(token)
        if not match:
            raise DomainError(f"size {token!r} is not WxHxC")
        size = tuple(int(v) for v in match.groups())
        if min(size) < 1:
            raise DomainError(f"size {token!r} has a zero dimension")
        parsed.append(size)
    return parsed


def _time(func: Callable[[], object], runs: int, warmups: int) -> Tuple[Timing, object]:
    result = None
    for _ in range(warmups):
        result = func()
    samples = []
    for _ in range(runs):
        start = time.perf_counter()
        result = func()
        samples.append(time.perf_counter() - start)
    samples = np.asarray(samples)
    std = float(samples.std(ddof=1)) if samples.size > 1 else 0.0
    return Timing(mean_s=float(samples.mean()), std_s=std), result


def benchmark_size(size: Size, runs: int, warmups: int, seed: int = 0) -> BenchmarkRow:
    width, height, channels = size
    rng = rng_for(seed)
    f_left = random_feature_map(rng, width, height, channels)
    f_disp = random_feature_map(rng, width, height, channels)

    naive_timing, naive_out = _time(lambda: ddc_forward_naive(f_left, f_disp), runs, warmups)
    grid_timing, grid_out = _time(lambda: ddc_forward_gridshift(f_left, f_disp), runs, warmups)

    calib = default_calib()
    scene = two_plane_scene(max(width, MIN_WARP_SIDE), max(height, MIN_WARP_SIDE), calib)
    image = random_image(rng, scene.depth.width, scene.depth.height)
    warp_timing, _ = _time(lambda: synthesize_right_view(image, scene.depth, calib), runs, warmups)

    row = BenchmarkRow(
        width=width,
        height=height,
        channels=channels,
        naive_ddc=naive_timing,
        gridshift_ddc=grid_timing,
        warp=warp_timing,
        outputs_equal=naive_out.equals(grid_out),
        gridshift_faster=grid_timing.mean_s <= naive_timing.mean_s,
    )
    logger.info(
        f"{row.label}: naive {naive_timing.mean_s * 1e3:.2f} ms, grid-shift {grid_timing.mean_s * 1e3:.2f} ms, "
        f"warp {warp_timing.mean_s * 1e3:.2f} ms, equal={row.outputs_equal}"
    )
    return row


def run_benchmark(sizes: Sequence[Size], runs: int = 10, warmups: int = 3, seed: int = 0) -> BenchmarkReport:
    if not sizes:
        raise DomainError("size list is empty")
    if runs < 1 or warmups < 0:
        raise DomainError(f"need runs >= 1 and warmups >= 0, got runs={runs} warmups={warmups}")
    rows = [benchmark_size(tuple(size), runs, warmups, seed) for size in sizes]
    return BenchmarkReport(
        success=all(row.outputs_equal for row in rows),
        runs=runs,
        warmups=warmups,
        rows=rows,
    )
