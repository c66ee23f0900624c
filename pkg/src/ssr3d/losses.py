"""Training losses on rank-5 tensors: L1, MSE, and 0.5*MSE + 0.5*SAM.

Each loss is a single fused differentiable op: it computes its value in
numpy and registers one hand-derived vector-Jacobian product on the active
tape.  All losses are normalized per element, so magnitudes do not depend
on patch or batch size.  The SAM term of the combo loss is the mean
spectral angle in radians (so its scale is comparable to MSE).
"""

from __future__ import annotations

import warnings

import numpy as np

from .autograd import Tensor5, active_tape
from .errors import DimensionError, MetricError

_ANGLE_EPS = 1e-12  # keeps d(arccos) bounded when spectra are near-parallel


def _check_pair(sr: Tensor5, hr: Tensor5):
    if sr.shape != hr.shape:
        raise DimensionError(f"loss shape mismatch: {sr.shape} vs {hr.shape}")


def _record(sr, hr, value, grad_sr, grad_hr):
    out = Tensor5(np.full((1, 1, 1, 1, 1), value))
    out.requires_grad = any(t.requires_grad or not t.is_leaf for t in (sr, hr))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def vjp(g):
            s = g.reshape(())
            return (grad_sr * s, grad_hr * s)
        tape.record(out, (sr, hr), vjp)
    return out


def l1_loss(sr: Tensor5, hr: Tensor5) -> Tensor5:
    """Mean absolute error; gradient is the elementwise sign over element count."""
    _check_pair(sr, hr)
    diff = hr.data - sr.data
    n = diff.size
    value = float(np.abs(diff).mean())
    sign = np.sign(diff)
    return _record(sr, hr, value, -sign / n, sign / n)


def mse_loss(sr: Tensor5, hr: Tensor5) -> Tensor5:
    """Mean squared error per element."""
    _check_pair(sr, hr)
    diff = hr.data - sr.data
    n = diff.size
    value = float((diff * diff).mean())
    return _record(sr, hr, value, -2.0 * diff / n, 2.0 * diff / n)


def _sam_term(sr: Tensor5, hr: Tensor5):
    """Mean spectral angle (radians) over valid pixels, with analytic gradients.

    Spectra run along the band axis.  Pixels where either spectrum has zero
    norm are excluded and counted.
    """
    s = sr.data
    t = hr.data
    dot = (s * t).sum(axis=2, keepdims=True)
    ns = np.sqrt((s * s).sum(axis=2, keepdims=True))
    nt = np.sqrt((t * t).sum(axis=2, keepdims=True))
    valid = (ns > 0.0) & (nt > 0.0)
    n_excluded = int(valid.size - valid.sum())
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise MetricError("spectral angle undefined: every pixel has a zero-norm spectrum")

    safe_ns = np.where(valid, ns, 1.0)
    safe_nt = np.where(valid, nt, 1.0)
    rho = np.clip(dot / (safe_ns * safe_nt), -1.0, 1.0)
    theta = np.where(valid, np.arccos(rho), 0.0)
    value = float(theta.sum() / n_valid)

    # d(theta)/ds = -(t/(|s||t|) - rho*s/|s|^2) / sqrt(1 - rho^2)
    inv_root = 1.0 / np.sqrt(np.maximum(1.0 - rho * rho, _ANGLE_EPS))
    scale = np.where(valid, inv_root / n_valid, 0.0)
    grad_s = -scale * (t / (safe_ns * safe_nt) - rho * s / (safe_ns * safe_ns))
    grad_t = -scale * (s / (safe_ns * safe_nt) - rho * t / (safe_nt * safe_nt))
    return value, grad_s, grad_t, n_excluded


def combo_loss(sr: Tensor5, hr: Tensor5) -> Tensor5:
    """Equal-weight sum of MSE and the mean spectral angle in radians."""
    _check_pair(sr, hr)
    if sr.shape[2] < 2:
        raise DimensionError(f"combo loss needs >= 2 bands, got {sr.shape[2]}")
    diff = hr.data - sr.data
    n = diff.size
    mse_value = float((diff * diff).mean())
    sam_value, sam_gs, sam_gt, excluded = _sam_term(sr, hr)
    if excluded:
        warnings.warn(f"combo loss excluded {excluded} zero-norm spectrum pixel(s)")
    value = 0.5 * mse_value + 0.5 * sam_value
    grad_sr = 0.5 * (-2.0 * diff / n) + 0.5 * sam_gs
    grad_hr = 0.5 * (2.0 * diff / n) + 0.5 * sam_gt
    return _record(sr, hr, value, grad_sr, grad_hr)


LOSS_FUNCTIONS = {"l1": l1_loss, "mse": mse_loss, "combo": combo_loss}
