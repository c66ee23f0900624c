"""Evaluation metrics for reconstructed cubes: PSNR, SSIM, SAM.

PSNR and SSIM are computed per band and averaged over bands; SAM is the
mean per-pixel angle between spectra, reported in degrees.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import HsiCube
from .errors import DimensionError, GeometryError, MetricError


@dataclass
class MetricsReport:
    psnr: float  # dB; +inf when the cubes are identical
    ssim: float
    sam: float  # degrees


def _as_f64(cube) -> np.ndarray:
    """Accept an HsiCube or a raw (bands, h, w) array; compute in float64."""
    arr = cube.values if isinstance(cube, HsiCube) else np.asarray(cube)
    if arr.ndim != 3:
        raise DimensionError(f"metric input needs rank 3 (band, row, col), got {arr.ndim}")
    return arr.astype(np.float64)


def _check_pair(sr: np.ndarray, hr: np.ndarray):
    if sr.shape != hr.shape:
        raise DimensionError(f"metric shape mismatch: {sr.shape} vs {hr.shape}")


def psnr(sr, hr, peak: float = 1.0) -> float:
    """Per-band 10*log10(peak^2 / MSE), averaged over bands."""
    sr, hr = _as_f64(sr), _as_f64(hr)
    _check_pair(sr, hr)
    if peak <= 0:
        raise DimensionError(f"peak must be > 0, got {peak}")
    diff = sr - hr
    band_mse = (diff * diff).mean(axis=(1, 2))
    with np.errstate(divide="ignore"):
        band_psnr = 10.0 * np.log10(peak * peak / band_mse)
    return float(np.mean(band_psnr))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(sr, hr, peak: float = 1.0, window: int = 11, sigma: float = 1.5) -> float:
    """Single-scale SSIM per band with a Gaussian window, averaged over bands.

    Windows are fully interior (no padding); spatial dims must be at least
    the window size.
    """
    sr, hr = _as_f64(sr), _as_f64(hr)
    _check_pair(sr, hr)
    if sr.shape[1] < window or sr.shape[2] < window:
        raise GeometryError(
            f"SSIM needs spatial dims >= window {window}, got {sr.shape[1]}x{sr.shape[2]}")
    win = _gaussian_window(window, sigma)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    scores = []
    for b in range(sr.shape[0]):
        x = sr[b]
        y = hr[b]
        xw = np.lib.stride_tricks.sliding_window_view(x, (window, window))
        yw = np.lib.stride_tricks.sliding_window_view(y, (window, window))
        mu_x = np.einsum("ijkl,kl->ij", xw, win)
        mu_y = np.einsum("ijkl,kl->ij", yw, win)
        xx = np.einsum("ijkl,kl->ij", xw * xw, win)
        yy = np.einsum("ijkl,kl->ij", yw * yw, win)
        xy = np.einsum("ijkl,kl->ij", xw * yw, win)
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        score = (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                 / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)))
        scores.append(score.mean())
    return float(np.mean(scores))


def sam(sr, hr) -> float:
    """Mean per-pixel spectral angle in degrees; zero-norm pixels are skipped."""
    sr, hr = _as_f64(sr), _as_f64(hr)
    _check_pair(sr, hr)
    if sr.shape[0] < 2:
        raise DimensionError(f"SAM needs >= 2 bands, got {sr.shape[0]}")
    s = sr.reshape(sr.shape[0], -1)
    t = hr.reshape(hr.shape[0], -1)
    dot = (s * t).sum(axis=0)
    ns = np.sqrt((s * s).sum(axis=0))
    nt = np.sqrt((t * t).sum(axis=0))
    valid = (ns > 0.0) & (nt > 0.0)
    skipped = int(valid.size - valid.sum())
    if not valid.any():
        raise MetricError("spectral angle undefined: every pixel has a zero-norm spectrum")
    if skipped:
        warnings.warn(f"SAM skipped {skipped} zero-norm spectrum pixel(s)")
    rho = np.clip(dot[valid] / (ns[valid] * nt[valid]), -1.0, 1.0)
    return float(np.degrees(np.arccos(rho)).mean())


def metrics_report(sr, hr, peak: float = 1.0) -> MetricsReport:
    return MetricsReport(psnr=psnr(sr, hr, peak), ssim=ssim(sr, hr, peak), sam=sam(sr, hr))
