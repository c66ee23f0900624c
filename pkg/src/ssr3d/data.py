"""Hyperspectral cube I/O, synthesis, degradation and patch pipeline.

Cubes are float32, band-major (band, row, col).  The on-disk container is
"HSC1": magic, three u32 little-endian dims (bands, height, width), the
float32 little-endian payload, and a CRC32 trailer over everything before it.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, GeometryError

HSC_MAGIC = b"HSC1"
# refuse headers asking for more than this many values (1 GiB of float32)
MAX_CUBE_VALUES = 1 << 28


class HsiCube:
    """A single hyperspectral image: float32 values shaped (bands, height, width)."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 3:
            raise DimensionError(f"cube needs rank 3 (band, row, col), got rank {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("cube contains non-finite values")
        self.values = arr

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __repr__(self):
        return f"HsiCube(bands={self.bands}, height={self.height}, width={self.width})"


def write_hsc(cube: HsiCube, path):
    payload = np.ascontiguousarray(cube.values, dtype="<f4").tobytes()
    head = HSC_MAGIC + struct.pack("<III", cube.bands, cube.height, cube.width)
    body = head + payload
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def read_hsc(path) -> HsiCube:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20:
        raise FormatError(f"file too short for an HSC header ({len(blob)} bytes)")
    if blob[:4] != HSC_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r} at byte offset 0, expected {HSC_MAGIC!r}")
    bands, height, width = struct.unpack_from("<III", blob, 4)
    count = bands * height * width
    if min(bands, height, width) < 1 or count > MAX_CUBE_VALUES:
        raise FormatError(
            f"header at byte offset 4 declares {bands}x{height}x{width} values; "
            f"limit is {MAX_CUBE_VALUES}")
    expected = 16 + 4 * count
    if len(blob) != expected + 4:
        raise FormatError(
            f"truncated payload: expected {expected + 4} bytes, file has {len(blob)} "
            f"(payload starts at byte offset 16)")
    (crc,) = struct.unpack_from("<I", blob, expected)
    if crc != zlib.crc32(blob[:expected]):
        raise FormatError(f"CRC32 mismatch in trailer at byte offset {expected}")
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=16)
    return HsiCube(values.reshape(bands, height, width).copy())


# ---------------------------------------------------------------------------
# synthetic cubes

SYNTH_KINDS = ("gaussian-blobs", "spectral-ramps", "checker")


def synth_cube(kind: str, bands: int, height: int, width: int, seed: int = 0) -> HsiCube:
    """Generate a smooth synthetic cube with values in [0, 1].

    Spectra vary slowly across bands so adjacent bands stay strongly
    correlated, like real hyperspectral data.
    """
    if kind not in SYNTH_KINDS:
        raise DimensionError(f"unknown synthetic kind {kind!r}, expected one of {SYNTH_KINDS}")
    if height < 8 or width < 8 or bands < 4:
        raise GeometryError(
            f"synthetic cubes need >=8x8 spatial and >=4 bands, got {bands}x{height}x{width}")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    lam = np.arange(bands, dtype=np.float64)

    if kind == "gaussian-blobs":
        cube = np.zeros((bands, height, width))
        n_blobs = 6
        for _ in range(n_blobs):
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            sy = rng.uniform(height / 8, height / 3)
            sx = rng.uniform(width / 8, width / 3)
            spot = np.exp(-((ys - cy) ** 2 / (2 * sy**2) + (xs - cx) ** 2 / (2 * sx**2)))
            center = rng.uniform(0, bands)
            sigma = rng.uniform(bands, 2.0 * bands)  # wide: adjacent bands stay correlated
            envelope = 0.3 + np.exp(-((lam - center) ** 2) / (2 * sigma**2))
            cube += envelope[:, None, None] * spot[None, :, :]
    elif kind == "spectral-ramps":
        gradient = (ys + xs) / (height + width - 2)
        ramp = 0.25 + 0.75 * (lam + 1.0) / bands
        wave = 0.15 * np.sin(2 * np.pi * (xs / width + rng.uniform(0, 1)))
        cube = ramp[:, None, None] * (gradient + wave)[None, :, :]
    else:  # checker
        cell = max(2, min(height, width) // 8)
        board = ((ys // cell + xs // cell) % 2) * 2.0 - 1.0
        contrast = 0.35 * np.cos(np.pi * lam / (2.0 * bands))
        cube = 0.5 + contrast[:, None, None] * board[None, :, :]
        cube += 0.05 * rng.standard_normal((1, height, width))

    lo, hi = cube.min(), cube.max()
    if hi > lo:
        cube = (cube - lo) / (hi - lo)
    return HsiCube(np.clip(cube, 0.0, 1.0))


# ---------------------------------------------------------------------------
# bicubic resampling (Catmull-Rom style kernel, a = -0.5, clamp-to-edge)

_BICUBIC_A = -0.5


def _cubic_weight(t: np.ndarray) -> np.ndarray:
    a = _BICUBIC_A
    t = np.abs(t)
    w = np.where(
        t <= 1.0,
        (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0,
        np.where(t < 2.0, a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a, 0.0),
    )
    return w


def _resample_axis_plan(n_in: int, n_out: int):
    """Tap indices (n_out, 4) and weights (n_out, 4) for one axis."""
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    offsets = np.arange(-1, 3)
    idx = base[:, None] + offsets[None, :]
    weights = _cubic_weight(frac[:, None] - offsets[None, :])
    idx = np.clip(idx, 0, n_in - 1)  # clamp-to-edge
    return idx, weights


def bicubic_resize(cube: HsiCube, out_h: int, out_w: int) -> HsiCube:
    """Per-band 2D bicubic resample of the spatial axes; bands untouched."""
    if out_h < 4 or out_w < 4:
        raise GeometryError(f"bicubic output dims must be >= 4, got {out_h}x{out_w}")
    data = cube.values.astype(np.float64)
    idx_w, wts_w = _resample_axis_plan(cube.width, out_w)
    data = np.einsum("bhwk,wk->bhw", data[:, :, idx_w], wts_w)
    idx_h, wts_h = _resample_axis_plan(cube.height, out_h)
    data = np.einsum("bhkw,hk->bhw", data[:, idx_h, :], wts_h)
    return HsiCube(data.astype(np.float32))


# ---------------------------------------------------------------------------
# patches and augmentation

@dataclass
class Patch:
    values: np.ndarray  # (bands, size, size); float32 until mean subtraction
    source_id: str
    transform: str = "orig"


@dataclass
class PatchSet:
    patches: list[Patch] = field(default_factory=list)
    patch_hw: int = 0
    scale: int = 1

    def __len__(self):
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)


def extract_patches(cube: HsiCube, count: int, patch_hw: int, seed: int,
                    source_id: str = "cube", scale: int = 1) -> PatchSet:
    """Randomly place `count` full-depth square patches; positions depend only on seed."""
    if patch_hw > cube.height or patch_hw > cube.width:
        raise GeometryError(
            f"patch {patch_hw}x{patch_hw} larger than cube {cube.height}x{cube.width}")
    if patch_hw % scale:
        raise GeometryError(
            f"patch size {patch_hw} not divisible by degradation factor {scale}")
    rng = np.random.default_rng(seed)
    out = PatchSet(patch_hw=patch_hw, scale=scale)
    for i in range(count):
        top = int(rng.integers(0, cube.height - patch_hw + 1))
        left = int(rng.integers(0, cube.width - patch_hw + 1))
        vals = cube.values[:, top:top + patch_hw, left:left + patch_hw].copy()
        out.patches.append(Patch(vals, source_id, "orig"))
    return out


def augment(patches: PatchSet, flips: bool = True, rotations: bool = True,
            scales=(1.0, 0.75, 0.5)) -> PatchSet:
    """Orbit of each patch under {identity, hflip} x {0,90,180,270} x scales.

    Scaled variants whose size would drop below 8 pixels or stop being
    divisible by the degradation factor are skipped (with a warning).
    """
    flip_opts = (False, True) if flips else (False,)
    rot_opts = (0, 1, 2, 3) if rotations else (0,)
    out = PatchSet(patch_hw=patches.patch_hw, scale=patches.scale)
    skipped = set()
    for s in scales:
        size = int(round(patches.patch_hw * s))
        if size < 8 or size % patches.scale != 0 or size // patches.scale < 4:
            skipped.add(s)
            continue
        for p in patches:
            if size == p.values.shape[1]:
                base = p.values
            else:
                base = bicubic_resize(HsiCube(p.values), size, size).values
            for f in flip_opts:
                arr = np.flip(base, axis=2) if f else base
                for rot in rot_opts:
                    vals = np.rot90(arr, rot, axes=(1, 2)).copy()
                    tag = f"s{s:g}_r{rot * 90}_f{int(f)}"
                    out.patches.append(Patch(vals, p.source_id, tag))
    if skipped:
        warnings.warn(
            f"skipped {len(skipped)} augmentation scale(s) {sorted(skipped)}: "
            f"size below 8 or not divisible by {patches.scale}")
    return out


def compute_mean(cubes) -> float:
    """Global scalar mean over all values of all training cubes."""
    total = 0.0
    count = 0
    for cube in cubes:
        total += float(cube.values.sum(dtype=np.float64))
        count += cube.values.size
    if count == 0:
        raise DimensionError("compute_mean needs at least one cube")
    return total / count


def mean_subtract(patches: PatchSet, training_mean: float) -> PatchSet:
    """Subtract the stored training mean from every patch.

    Values move to float64 here (the compute precision), so adding the mean
    back later restores the original float32 values exactly.
    """
    out = PatchSet(patch_hw=patches.patch_hw, scale=patches.scale)
    for p in patches:
        out.patches.append(Patch(p.values.astype(np.float64) - float(training_mean),
                                 p.source_id, p.transform))
    return out


def degrade(patch_values: np.ndarray, scale: int) -> np.ndarray:
    """Bicubic-downsample one HR patch by the scale factor."""
    bands, h, w = patch_values.shape
    if h % scale or w % scale:
        raise GeometryError(f"patch {h}x{w} not divisible by scale {scale}")
    lr = bicubic_resize(HsiCube(patch_values), h // scale, w // scale)
    return lr.values


def crop_to_multiple(cube: HsiCube, size: int, scale: int) -> HsiCube:
    """Top-left crop of at most size x size, trimmed to a multiple of scale."""
    ch = min(size, cube.height) // scale * scale
    cw = min(size, cube.width) // scale * scale
    if ch < scale or cw < scale:
        raise GeometryError(f"cube {cube.shape} too small to crop at scale {scale}")
    return HsiCube(cube.values[:, :ch, :cw].copy())
