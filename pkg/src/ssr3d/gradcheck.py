"""Finite-difference verification of every differentiable operation.

Each suite compares tape gradients against central differences of a
randomly-weighted scalar readout, elementwise, and reports the largest
relative error.  The end-to-end suite differentiates a tiny full model
through the L1 loss with respect to every parameter and the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import (
    Conv3dParams,
    Tape,
    Tensor5,
    add,
    concat_channels,
    conv3d,
    conv3d_transposed,
    relu,
    tsum,
)
from .losses import combo_loss, l1_loss, mse_loss
from .model import Ssrnet, SsrnetConfig

OP_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5


@dataclass
class CheckRow:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _rel_err(analytic, numeric, floor=1e-6) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))


def _central_diff(f, arr, h):
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def _weighted_readout(out: Tensor5, weights: np.ndarray) -> Tensor5:
    """sum(out * weights): exercises the op's vjp with a non-uniform upstream."""
    from .autograd import active_tape

    value = Tensor5(np.full((1, 1, 1, 1, 1), float((out.data * weights).sum())))
    value.requires_grad = True
    tape = active_tape()
    if tape is not None:
        tape.record(value, (out,), lambda g: (g.reshape(()) * weights,))
    return value


def _check_against_fd(build_out, tensors, params, rng, h=1e-5):
    """Tape gradients of sum(build_out() * R) vs central differences."""
    with Tape() as tape:
        out = build_out()
        weights = rng.standard_normal(out.shape)
        loss = _weighted_readout(out, weights)
    tape.backward(loss)

    def value():
        return float((build_out().data * weights).sum())

    worst = 0.0
    for t in tensors:
        fd = _central_diff(value, t.data, h)
        worst = max(worst, _rel_err(t.grad, fd))
    for p in params:
        fd_w = _central_diff(value, p.weight, h)
        worst = max(worst, _rel_err(p.weight_grad, fd_w))
        fd_b = _central_diff(value, p.bias, h)
        worst = max(worst, _rel_err(p.bias_grad, fd_b))
    return worst


def check_conv3d(seed=0):
    rng = np.random.default_rng(seed)
    x = Tensor5(rng.standard_normal((1, 2, 3, 4, 4)), requires_grad=True)
    p = Conv3dParams(rng.standard_normal((2, 2, 3, 3, 3)) * 0.5,
                     rng.standard_normal(2) * 0.1,
                     stride=(1, 1, 1), padding=(1, 1, 1))
    return _check_against_fd(lambda: conv3d(x, p), [x], [p], rng)


def check_conv3d_transposed(seed=0):
    rng = np.random.default_rng(seed)
    x = Tensor5(rng.standard_normal((1, 2, 3, 3, 3)), requires_grad=True)
    p = Conv3dParams(rng.standard_normal((2, 2, 3, 4, 4)) * 0.5,
                     rng.standard_normal(2) * 0.1,
                     stride=(1, 2, 2), padding=(1, 1, 1),
                     transposed=True)
    return _check_against_fd(lambda: conv3d_transposed(x, p), [x], [p], rng)


def check_relu(seed=0):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.2, 1.0, (1, 2, 3, 3, 3)) * rng.choice([-1.0, 1.0], (1, 2, 3, 3, 3))
    x = Tensor5(vals, requires_grad=True)  # seeded away from the kink at 0
    return _check_against_fd(lambda: relu(x), [x], [], rng)


def check_add(seed=0):
    rng = np.random.default_rng(seed)
    a = Tensor5(rng.standard_normal((1, 2, 2, 3, 3)), requires_grad=True)
    b = Tensor5(rng.standard_normal((1, 2, 2, 3, 3)), requires_grad=True)
    return _check_against_fd(lambda: add(a, b), [a, b], [], rng)


def check_concat(seed=0):
    rng = np.random.default_rng(seed)
    parts = [Tensor5(rng.standard_normal((1, c, 2, 2, 2)), requires_grad=True)
             for c in (1, 2, 3)]
    return _check_against_fd(lambda: concat_channels(parts), parts, [], rng)


def check_sum(seed=0):
    rng = np.random.default_rng(seed)
    x = Tensor5(rng.standard_normal((2, 1, 2, 2, 2)), requires_grad=True)
    return _check_against_fd(lambda: tsum(x), [x], [], rng)


def _check_loss(loss_fn, seed, offset=0.0):
    rng = np.random.default_rng(seed)
    hr0 = rng.random((1, 1, 3, 3, 3)) + offset
    sr0 = hr0 + rng.choice([-1.0, 1.0], hr0.shape) * rng.uniform(0.1, 0.4, hr0.shape)
    sr = Tensor5(sr0, requires_grad=True)
    hr = Tensor5(hr0)
    with Tape() as tape:
        loss = loss_fn(sr, hr)
    tape.backward(loss)

    def value():
        return loss_fn(Tensor5(sr.data), hr).item()

    fd = _central_diff(value, sr.data, 1e-5)
    return _rel_err(sr.grad, fd)


def check_l1(seed=0):
    return _check_loss(l1_loss, seed)


def check_mse(seed=0):
    return _check_loss(mse_loss, seed)


def check_combo(seed=0):
    return _check_loss(combo_loss, seed, offset=0.3)


_E2E_SEED = 12  # audited: every activation and residual clears the kink margin


def check_model_end_to_end(seed=None, h=1e-5):
    """Tiny full network through the L1 loss: every parameter plus the input.

    This suite is a fixed experiment: central differences are only a valid
    reference when no relu pre-activation or L1 residual sits within the
    step of a kink, so the network gets small nonzero biases, the target is
    offset from the initial output by a +-0.25 margin, and the seed is
    pinned to an audited kink-free configuration.
    """
    cfg = SsrnetConfig(d_modules=1, units_per_module=1, filters=4, k=3, scale=2)
    model = Ssrnet.create(cfg, seed=_E2E_SEED)
    rng = np.random.default_rng(_E2E_SEED + 1)
    for p in model.store.values():
        p.bias[...] = rng.uniform(0.05, 0.15, p.bias.shape) * rng.choice([-1.0, 1.0], p.bias.shape)
    x = Tensor5(rng.random((1, 1, 5, 6, 6)), requires_grad=True)
    sr0 = model.forward_tensor(Tensor5(x.data))
    target = Tensor5(sr0.data + 0.25 * rng.choice([-1.0, 1.0], sr0.shape))

    model.zero_grad()
    with Tape() as tape:
        loss = l1_loss(model.forward_tensor(x), target)
    tape.backward(loss)

    def value():
        return l1_loss(model.forward_tensor(Tensor5(x.data)), target).item()

    worst = _rel_err(x.grad, _central_diff(value, x.data, h))
    for name, p in model.store.items():
        err_w = _rel_err(p.weight_grad, _central_diff(value, p.weight, h))
        err_b = _rel_err(p.bias_grad, _central_diff(value, p.bias, h))
        worst = max(worst, err_w, err_b)
    return worst


SUITES = [
    ("conv3d", check_conv3d, OP_TOLERANCE),
    ("conv3d_transposed", check_conv3d_transposed, OP_TOLERANCE),
    ("relu", check_relu, OP_TOLERANCE),
    ("add", check_add, OP_TOLERANCE),
    ("concat_channels", check_concat, OP_TOLERANCE),
    ("sum", check_sum, OP_TOLERANCE),
    ("l1_loss", check_l1, OP_TOLERANCE),
    ("mse_loss", check_mse, OP_TOLERANCE),
    ("combo_loss", check_combo, OP_TOLERANCE),
    ("model_end_to_end", check_model_end_to_end, MODEL_TOLERANCE),
]


def run_all(seed: int = 0, corrupt: str | None = None) -> list[CheckRow]:
    """Run every suite; `corrupt` fakes a wrong gradient in the named suite
    (harness self-test)."""
    rows = []
    for name, fn, tol in SUITES:
        err = fn(seed)
        if corrupt == name:
            err += 1e-2
        rows.append(CheckRow(name=name, max_rel_err=err, tolerance=tol))
    return rows
