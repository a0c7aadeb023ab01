#!/usr/bin/env python
"""
File formats for images, depth/disparity maps, calibration and features

- PFM ("Pf", grayscale float32, bottom-up rows, scale sign = endianness)
- binary PGM (P5) / PPM (P6) with maxval 255
- calibration text files, one `key = value` per line
- PSFM, a little-endian container for feature maps (version 1) and
  cost volumes (version 2)

Every reader has a bytes-level parse_* counterpart. Parsers only ever raise
FormatError (or its UnsupportedFormatError subclass) on bad input. Writers
go through a temp file and an atomic rename, so a failed write never leaves
a partial file behind.
"""
import contextlib
import logging
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from core_types import (
    MAX_DEPTH_LEVELS,
    CostVolume,
    DepthMap,
    DisparityMap,
    FeatureMap,
    RasterImage,
    StereoCalib,
)
from errors import FormatError, PseudoStereoError, UnsupportedFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

WHITESPACE = b" \t\r\n"
MAX_TOKEN_LENGTH = 32

PSFM_MAGIC = b"PSFM"
PSFM_VERSION_FEATURES = 1
PSFM_VERSION_VOLUME = 2
PSFM_PREFIX = struct.Struct("<4sH")
PSFM_FEATURE_DIMS = struct.Struct("<IIIB")
PSFM_VOLUME_DIMS = struct.Struct("<IIIIB")
PSFM_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
PSFM_DTYPE_CODES = {"f32": 0, "f64": 1}

CALIB_KEYS = (
    "focal_px",
    "baseline_m",
    "stride",
    "z_min_m",
    "depth_interval_m",
    "num_depth_levels",
)
CALIB_INTEGER_KEYS = {"stride", "num_depth_levels"}


# ============================================================================
# Shared helpers
# ============================================================================

def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write to a sibling temp file, then rename over the target"""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {len(payload)} bytes to {path}")
    return path


def _header_tokens(
    buf: bytes,
    count: int,
    path: str,
    allow_comments: bool
) -> Tuple[List[str], int]:
    """
    Read `count` whitespace-separated ASCII tokens; returns them and the offset
    just past the single whitespace byte that ends the header.
    """
    tokens: List[str] = []
    pos = 0
    size = len(buf)
    comment = ord("#")

    while len(tokens) < count:
        while pos < size and buf[pos] in WHITESPACE:
            pos += 1
        if allow_comments and pos < size and buf[pos] == comment:
            while pos < size and buf[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < size and buf[pos] not in WHITESPACE and not (allow_comments and buf[pos] == comment):
            pos += 1
        if pos == start:
            raise FormatError("truncated header", path=path, offset=pos)
        if pos - start > MAX_TOKEN_LENGTH:
            raise FormatError("header token too long", path=path, offset=start)
        try:
            tokens.append(buf[start:pos].decode("ascii"))
        except UnicodeDecodeError:
            raise FormatError("non-ASCII header token", path=path, offset=start) from None

    if pos >= size or buf[pos] not in WHITESPACE:
        raise FormatError("header not terminated by whitespace", path=path, offset=pos)
    return tokens, pos + 1


def _positive_int(token: str, what: str, path: str, offset: int) -> int:
    if not token.isascii() or not token.isdigit() or int(token) < 1:
        raise FormatError(f"{what} must be a positive integer, got {token!r}", path=path, offset=offset)
    return int(token)


def _check_payload(buf: bytes, offset: int, expected: int, path: str) -> None:
    actual = len(buf) - offset
    if actual < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, found {actual}", path=path, offset=len(buf))
    if actual > expected:
        raise FormatError(f"{actual - expected} trailing bytes after payload", path=path, offset=offset + expected)


# ============================================================================
# PFM
# ============================================================================

def parse_pfm(buf: bytes, path: str = "<bytes>") -> np.ndarray:
    """Decode a grayscale PFM into a top-down (H, W) float64 array"""
    if buf[:2] == b"PF":
        raise UnsupportedFormatError("color PFM is not supported", path=path, offset=0)
    if buf[:2] != b"Pf":
        raise FormatError("bad magic, expected 'Pf'", path=path, offset=0)

    tokens, offset = _header_tokens(buf, 4, path, allow_comments=False)
    if tokens[0] != "Pf":
        raise FormatError("bad magic, expected 'Pf'", path=path, offset=0)
    width = _positive_int(tokens[1], "width", path, 2)
    height = _positive_int(tokens[2], "height", path, 2)
    try:
        scale = float(tokens[3])
    except ValueError:
        raise FormatError(f"scale is not a number: {tokens[3]!r}", path=path, offset=offset - 1) from None
    if not math.isfinite(scale) or scale == 0.0:
        raise FormatError(f"scale must be finite and non-zero, got {scale}", path=path, offset=offset - 1)

    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    _check_payload(buf, offset, width * height * dtype.itemsize, path)
    rows = np.frombuffer(buf, dtype=dtype, count=width * height, offset=offset).reshape(height, width)
    return np.flipud(rows).astype(np.float64)


def _encode_pfm(values: np.ndarray) -> bytes:
    height, width = values.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    payload = np.flipud(values).astype("<f4").tobytes()
    return header + payload


def read_depth_pfm(path: PathLike) -> DepthMap:
    """Non-positive or non-finite stored values become invalid pixels"""
    return DepthMap.from_array(parse_pfm(Path(path).read_bytes(), str(path)))


def write_depth_pfm(depth: DepthMap, path: PathLike) -> Path:
    return atomic_write_bytes(path, _encode_pfm(np.where(depth.valid, depth.z, 0.0)))


def read_disparity_pfm(path: PathLike) -> DisparityMap:
    """Non-positive or non-finite stored values become invalid pixels"""
    values = parse_pfm(Path(path).read_bytes(), str(path))
    return DisparityMap.from_array(values, np.isfinite(values) & (values > 0))


def write_disparity_pfm(disp: DisparityMap, path: PathLike) -> Path:
    return atomic_write_bytes(path, _encode_pfm(np.where(disp.valid, disp.d, 0.0)))


# ============================================================================
# PGM / PPM
# ============================================================================

def parse_pnm(buf: bytes, path: str = "<bytes>") -> RasterImage:
    magic = buf[:2]
    if magic in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedFormatError(f"only binary P5/P6 are supported, got {magic!r}", path=path, offset=0)
    if magic not in (b"P5", b"P6"):
        raise FormatError("bad magic, expected P5 or P6", path=path, offset=0)

    tokens, offset = _header_tokens(buf, 4, path, allow_comments=True)
    if tokens[0] not in ("P5", "P6"):
        raise FormatError("bad magic, expected P5 or P6", path=path, offset=0)
    width = _positive_int(tokens[1], "width", path, 2)
    height = _positive_int(tokens[2], "height", path, 2)
    maxval = _positive_int(tokens[3], "maxval", path, 2)
    if maxval != 255:
        raise UnsupportedFormatError(f"maxval must be 255, got {maxval}", path=path, offset=offset - 1)

    channels = 1 if tokens[0] == "P5" else 3
    _check_payload(buf, offset, width * height * channels, path)
    pixels = np.frombuffer(buf, dtype=np.uint8, count=width * height * channels, offset=offset)
    return RasterImage(pixels.reshape(height, width, channels) / 255.0)


def _to_bytes(image: RasterImage) -> np.ndarray:
    values = np.where(image.hole_mask[:, :, np.newaxis], 0.0, image.intensities)
    return np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image_pgm_ppm(path: PathLike) -> RasterImage:
    return parse_pnm(Path(path).read_bytes(), str(path))


def write_image_pgm_ppm(image: RasterImage, path: PathLike) -> Path:
    """P5 for one channel, P6 for three; hole pixels are written black"""
    magic = "P5" if image.channels == 1 else "P6"
    header = f"{magic}\n{image.width} {image.height}\n255\n".encode("ascii")
    return atomic_write_bytes(path, header + _to_bytes(image).tobytes())


def write_mask_pgm(mask: np.ndarray, path: PathLike) -> Path:
    """Boolean mask as P5, 255 where True"""
    mask = np.asarray(mask, dtype=bool)
    height, width = mask.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return atomic_write_bytes(path, header + (mask.astype(np.uint8) * 255).tobytes())


# ============================================================================
# Calibration
# ============================================================================

def parse_calib(text: Union[str, bytes], path: str = "<text>") -> StereoCalib:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("calibration file is not UTF-8", path=path, offset=e.start) from None

    entries: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {line_no} is not `key = value`", path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise FormatError(f"duplicate key on line {line_no}", path=path, key=key)
        entries[key] = value

    values: Dict[str, Union[int, float]] = {}
    for key in CALIB_KEYS:
        if key not in entries:
            raise FormatError("missing calibration key", path=path, key=key)
        try:
            number = float(entries[key])
        except ValueError:
            raise FormatError(f"value {entries[key]!r} is not a number", path=path, key=key) from None
        if not math.isfinite(number) or number <= 0:
            raise FormatError(f"value must be finite and positive, got {entries[key]!r}", path=path, key=key)
        if key in CALIB_INTEGER_KEYS:
            if not number.is_integer():
                raise FormatError(f"value must be an integer, got {entries[key]!r}", path=path, key=key)
            number = int(number)
        if key == "num_depth_levels" and number > MAX_DEPTH_LEVELS:
            raise FormatError(f"value must be at most {MAX_DEPTH_LEVELS}, got {entries[key]!r}", path=path, key=key)
        values[key] = number

    unknown = sorted(set(entries) - set(CALIB_KEYS))
    if unknown:
        logger.debug(f"Ignoring unknown calibration keys in {path}: {unknown}")

    try:
        return StereoCalib(**values)
    except ValidationError as e:
        raise FormatError(f"invalid calibration: {e.errors()[0]['msg']}", path=path) from None


def read_calib(path: PathLike) -> StereoCalib:
    return parse_calib(Path(path).read_bytes(), str(path))


def format_calib(calib: StereoCalib) -> str:
    lines = []
    for key in CALIB_KEYS:
        value = getattr(calib, key)
        lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def write_calib(calib: StereoCalib, path: PathLike) -> Path:
    return atomic_write_bytes(path, format_calib(calib).encode("utf-8"))


# ============================================================================
# PSFM
# ============================================================================

def _psfm_prefix(buf: bytes, path: str) -> int:
    if len(buf) < PSFM_PREFIX.size:
        raise FormatError("truncated header", path=path, offset=len(buf))
    magic, version = PSFM_PREFIX.unpack_from(buf, 0)
    if magic != PSFM_MAGIC:
        raise FormatError("bad magic, expected 'PSFM'", path=path, offset=0)
    if version not in (PSFM_VERSION_FEATURES, PSFM_VERSION_VOLUME):
        raise UnsupportedFormatError(f"unknown PSFM version {version}", path=path, offset=4)
    return version


def _psfm_payload(buf: bytes, offset: int, dims: Tuple[int, ...], code: int, path: str) -> np.ndarray:
    if code not in PSFM_DTYPES:
        raise FormatError(f"unknown dtype code {code}", path=path, offset=offset - 1)
    for index, dim in enumerate(dims):
        if dim < 1:
            raise FormatError("zero dimension in header", path=path, offset=PSFM_PREFIX.size + 4 * index)
    dtype = PSFM_DTYPES[code]
    count = math.prod(dims)
    _check_payload(buf, offset, count * dtype.itemsize, path)
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset).astype(np.float64)


def parse_feature_map(buf: bytes, path: str = "<bytes>") -> FeatureMap:
    version = _psfm_prefix(buf, path)
    if version != PSFM_VERSION_FEATURES:
        raise UnsupportedFormatError("file holds a cost volume, not a feature map", path=path, offset=4)
    if len(buf) < PSFM_PREFIX.size + PSFM_FEATURE_DIMS.size:
        raise FormatError("truncated header", path=path, offset=len(buf))
    width, height, channels, code = PSFM_FEATURE_DIMS.unpack_from(buf, PSFM_PREFIX.size)
    offset = PSFM_PREFIX.size + PSFM_FEATURE_DIMS.size
    values = _psfm_payload(buf, offset, (width, height, channels), code, path)
    try:
        return FeatureMap(values.reshape(height, width, channels))
    except PseudoStereoError as e:
        raise FormatError(f"invalid payload: {e}", path=path, offset=offset) from None


def parse_cost_volume(buf: bytes, path: str = "<bytes>") -> CostVolume:
    version = _psfm_prefix(buf, path)
    if version != PSFM_VERSION_VOLUME:
        raise UnsupportedFormatError("file holds a feature map, not a cost volume", path=path, offset=4)
    if len(buf) < PSFM_PREFIX.size + PSFM_VOLUME_DIMS.size:
        raise FormatError("truncated header", path=path, offset=len(buf))
    width, height, channels, levels, code = PSFM_VOLUME_DIMS.unpack_from(buf, PSFM_PREFIX.size)
    offset = PSFM_PREFIX.size + PSFM_VOLUME_DIMS.size
    values = _psfm_payload(buf, offset, (width, height, levels, channels), code, path)
    try:
        return CostVolume(values.reshape(height, width, levels, channels))
    except PseudoStereoError as e:
        raise FormatError(f"invalid payload: {e}", path=path, offset=offset) from None


def encode_feature_map(feature: FeatureMap, dtype: str = "f64") -> bytes:
    code = PSFM_DTYPE_CODES[dtype]
    header = PSFM_PREFIX.pack(PSFM_MAGIC, PSFM_VERSION_FEATURES)
    header += PSFM_FEATURE_DIMS.pack(feature.width, feature.height, feature.channels, code)
    return header + feature.data.astype(PSFM_DTYPES[code]).tobytes()


def encode_cost_volume(volume: CostVolume, dtype: str = "f64") -> bytes:
    code = PSFM_DTYPE_CODES[dtype]
    header = PSFM_PREFIX.pack(PSFM_MAGIC, PSFM_VERSION_VOLUME)
    header += PSFM_VOLUME_DIMS.pack(volume.width, volume.height, volume.channels, volume.num_levels, code)
    return header + volume.data.astype(PSFM_DTYPES[code]).tobytes()


def read_feature_map(path: PathLike) -> FeatureMap:
    return parse_feature_map(Path(path).read_bytes(), str(path))


def write_feature_map(feature: FeatureMap, path: PathLike, dtype: str = "f64") -> Path:
    return atomic_write_bytes(path, encode_feature_map(feature, dtype))


def read_cost_volume(path: PathLike) -> CostVolume:
    return parse_cost_volume(Path(path).read_bytes(), str(path))


def write_cost_volume(volume: CostVolume, path: PathLike, dtype: str = "f64") -> Path:
    return atomic_write_bytes(path, encode_cost_volume(volume, dtype))
