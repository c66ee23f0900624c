"""Dense rank-5 tensors with tape-based reverse-mode differentiation.

The engine supports exactly what the super-resolution network needs:
3D convolution, transposed 3D convolution, ReLU, channel concatenation,
elementwise add, and a sum reduction.  Everything computes in float64;
tensors are laid out (batch, channel, band, row, col).

Convolutions are evaluated as a loop over kernel offsets, each offset a
single einsum against a strided view of the (padded) input.  The loop
order is fixed, so results are reproducible bit-for-bit run to run.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, GeometryError

_AXIS_NAMES = ("batch", "channel", "band", "row", "col")


class Tensor5:
    """A (n, c, l, h, w) float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 5:
            raise DimensionError(f"Tensor5 needs rank 5, got rank {arr.ndim}")
        for name, dim in zip(_AXIS_NAMES, arr.shape):
            if dim < 1:
                raise DimensionError(f"Tensor5 {name} axis must be >= 1, got {dim}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor5(shape={self.shape}, requires_grad={self.requires_grad})"


class Conv3dParams:
    """Weights, bias and geometry for one (possibly transposed) 3D convolution.

    Weight layout is (c_out, c_in, k_l, k_h, k_w) for a forward convolution.
    For a transposed convolution axis 0 is the op's *input* channel count and
    axis 1 its output channels, so that `conv3d_transposed(y, p)` is exactly
    the adjoint of `conv3d(x, p)` sharing one buffer.
    """

    __slots__ = ("weight", "bias", "stride", "padding", "transposed",
                 "output_padding", "weight_grad", "bias_grad")

    def __init__(self, weight, bias, stride=(1, 1, 1), padding=(0, 0, 0),
                 transposed: bool = False, output_padding=(0, 0, 0)):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = tuple(int(s) for s in stride)
        self.padding = tuple(int(p) for p in padding)
        self.transposed = bool(transposed)
        self.output_padding = tuple(int(q) for q in output_padding)
        self._validate()
        self.weight_grad = np.zeros_like(self.weight)
        self.bias_grad = np.zeros_like(self.bias)

    def _validate(self):
        if self.weight.ndim != 5:
            raise DimensionError(f"conv weight needs rank 5, got rank {self.weight.ndim}")
        if any(k < 1 for k in self.weight.shape):
            raise DimensionError(f"conv weight dims must be >= 1, got {self.weight.shape}")
        if len(self.stride) != 3 or any(s < 1 for s in self.stride):
            raise DimensionError(f"stride must be three ints >= 1, got {self.stride}")
        if len(self.padding) != 3 or any(p < 0 for p in self.padding):
            raise DimensionError(f"padding must be three ints >= 0, got {self.padding}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.out_channels:
            raise DimensionError(
                f"bias length {self.bias.shape} does not match {self.out_channels} output channels")
        for q, s in zip(self.output_padding, self.stride):
            if q < 0 or q >= s:
                raise DimensionError(
                    f"output_padding {self.output_padding} must satisfy 0 <= q < stride {self.stride}")
        if not self.transposed and any(self.output_padding):
            raise DimensionError("output_padding is only valid for transposed convolutions")

    @property
    def in_channels(self) -> int:
        return self.weight.shape[0] if self.transposed else self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1] if self.transposed else self.weight.shape[0]

    @property
    def kernel(self) -> tuple[int, int, int]:
        return self.weight.shape[2:]

    def num_params(self) -> int:
        return self.weight.size + self.bias.size

    def zero_grad(self):
        self.weight_grad[...] = 0.0
        self.bias_grad[...] = 0.0

    def __repr__(self):
        kind = "transposed" if self.transposed else "conv"
        return (f"Conv3dParams({kind}, {self.in_channels}->{self.out_channels}, "
                f"kernel={tuple(self.kernel)}, stride={self.stride}, padding={self.padding})")


_ACTIVE_TAPES: list["Tape"] = []


def active_tape():
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


class Tape:
    """Ordered record of differentiable ops; replayed in reverse by backward()."""

    def __init__(self):
        self._records = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE_TAPES.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out: Tensor5, inputs, vjp):
        out.is_leaf = False
        self._records.append((out, tuple(inputs), vjp))

    def backward(self, loss: Tensor5):
        """Accumulate dLoss/dLeaf into every requires_grad leaf reachable from loss.

        Repeated calls accumulate.  Each pass carries its own upstream
        gradients, so intermediate values are never double-counted.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        flows = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._records):
            g = flows.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None:
                    continue
                if t.is_leaf:
                    if t.requires_grad:
                        t.accumulate_grad(gi)
                else:
                    prev = flows.get(id(t))
                    flows[id(t)] = gi if prev is None else prev + gi


# ---------------------------------------------------------------------------
# convolution internals

def _pad_spatial(x: np.ndarray, padding) -> np.ndarray:
    pl, ph, pw = padding
    if pl == ph == pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pl, pl), (ph, ph), (pw, pw)))


def _conv_out_dims(in_dims, kernel, stride, padding):
    out = []
    for name, i, k, s, p in zip(_AXIS_NAMES[2:], in_dims, kernel, stride, padding):
        span = i + 2 * p - k
        if span < 0:
            raise GeometryError(
                f"kernel {k} does not fit padded {name} extent {i + 2 * p}")
        o = span // s + 1
        if o < 1:
            raise GeometryError(f"zero-sized convolution output on {name} axis")
        out.append(o)
    return tuple(out)


def _strided_window(arr: np.ndarray, offset, stride, count):
    """View of arr at positions offset + stride*[0..count) along the three trailing axes."""
    (i, j, k), (sl, sh, sw), (ol, oh, ow) = offset, stride, count
    return arr[:, :,
               i: i + sl * (ol - 1) + 1: sl,
               j: j + sh * (oh - 1) + 1: sh,
               k: k + sw * (ow - 1) + 1: sw]


def _gather_conv(xp: np.ndarray, weight: np.ndarray, stride, out_dims) -> np.ndarray:
    """out[n,o,...] = sum_{c,i,j,k} weight[o,c,i,j,k] * xp[n,c, . *s + (i,j,k)]."""
    n = xp.shape[0]
    co = weight.shape[0]
    kl, kh, kw = weight.shape[2:]
    out = np.zeros((n, co) + tuple(out_dims))
    for i in range(kl):
        for j in range(kh):
            for k in range(kw):
                view = _strided_window(xp, (i, j, k), stride, out_dims)
                out += np.einsum("oc,nclhw->nolhw", weight[:, :, i, j, k], view)
    return out


def _scatter_conv(g: np.ndarray, weight: np.ndarray, stride, full_dims) -> np.ndarray:
    """Adjoint of _gather_conv: spread g back onto a buffer of trailing dims full_dims."""
    n = g.shape[0]
    ci = weight.shape[1]
    kl, kh, kw = weight.shape[2:]
    acc = np.zeros((n, ci) + tuple(full_dims))
    out_dims = g.shape[2:]
    for i in range(kl):
        for j in range(kh):
            for k in range(kw):
                view = _strided_window(acc, (i, j, k), stride, out_dims)
                view += np.einsum("oc,nolhw->nclhw", weight[:, :, i, j, k], g)
    return acc


def _weight_grad_conv(xp: np.ndarray, g: np.ndarray, kernel, stride) -> np.ndarray:
    """gw[o,c,i,j,k] = sum_{n,...} g[n,o,...] * xp[n,c, . *s + (i,j,k)]."""
    kl, kh, kw = kernel
    out_dims = g.shape[2:]
    gw = np.empty((g.shape[1], xp.shape[1], kl, kh, kw))
    for i in range(kl):
        for j in range(kh):
            for k in range(kw):
                view = _strided_window(xp, (i, j, k), stride, out_dims)
                gw[:, :, i, j, k] = np.einsum("nolhw,nclhw->oc", g, view)
    return gw


def _crop_spatial(arr: np.ndarray, padding) -> np.ndarray:
    pl, ph, pw = padding
    sl = slice(pl, arr.shape[2] - pl)
    sh = slice(ph, arr.shape[3] - ph)
    sw = slice(pw, arr.shape[4] - pw)
    return arr[:, :, sl, sh, sw]


# ---------------------------------------------------------------------------
# public ops

def conv3d(x: Tensor5, params: Conv3dParams) -> Tensor5:
    """Cross-correlate x with params.weight and add the per-channel bias."""
    if params.transposed:
        raise ContractError("conv3d called with transposed params; use conv3d_transposed")
    if x.shape[1] != params.in_channels:
        raise DimensionError(
            f"channel axis mismatch: input has {x.shape[1]} channels, "
            f"weight expects {params.in_channels}")
    out_dims = _conv_out_dims(x.shape[2:], params.kernel, params.stride, params.padding)
    xp = _pad_spatial(x.data, params.padding)
    data = _gather_conv(xp, params.weight, params.stride, out_dims)
    data += params.bias[None, :, None, None, None]
    out = Tensor5(data)
    out.requires_grad = True  # weights are always trainable

    tape = active_tape()
    if tape is not None:
        weight, stride, padding, kernel = params.weight, params.stride, params.padding, params.kernel
        need_input_grad = x.requires_grad or not x.is_leaf
        full_dims = xp.shape[2:]

        def vjp(g):
            params.weight_grad += _weight_grad_conv(xp, g, kernel, stride)
            params.bias_grad += g.sum(axis=(0, 2, 3, 4))
            if not need_input_grad:
                return (None,)
            gxp = _scatter_conv(g, weight, stride, full_dims)
            return (_crop_spatial(gxp, padding),)

        tape.record(out, (x,), vjp)
    return out


def conv3d_transposed(x: Tensor5, params: Conv3dParams) -> Tensor5:
    """Transposed convolution: the adjoint of conv3d with the same geometry."""
    if not params.transposed:
        raise ContractError("conv3d_transposed needs params with transposed=True")
    if x.shape[1] != params.in_channels:
        raise DimensionError(
            f"channel axis mismatch: input has {x.shape[1]} channels, "
            f"weight expects {params.in_channels}")
    in_dims = x.shape[2:]
    stride, padding, opad = params.stride, params.padding, params.output_padding
    kernel = params.kernel
    out_dims, full_dims = [], []
    for name, i, k, s, p, q in zip(_AXIS_NAMES[2:], in_dims, kernel, stride, padding, opad):
        o = (i - 1) * s - 2 * p + k + q
        if o < 1:
            raise GeometryError(f"transposed convolution output on {name} axis is {o}")
        out_dims.append(o)
        full_dims.append((i - 1) * s + k + q)

    # weight axis 0 matches x's channels, so the scatter/gather helpers
    # (which sum over their weight's axis 0 / emit its axis 0) take it as-is
    w = params.weight
    full = _scatter_conv(x.data, w, stride, full_dims)
    data = _crop_spatial(full, padding).copy()
    data += params.bias[None, :, None, None, None]
    out = Tensor5(data)
    out.requires_grad = True

    tape = active_tape()
    if tape is not None:
        need_input_grad = x.requires_grad or not x.is_leaf
        xd = x.data

        def embed(g):
            ext = np.zeros((g.shape[0], g.shape[1]) + tuple(full_dims))
            _crop_spatial(ext, padding)[...] = g
            return ext

        def vjp(g):
            g_ext = embed(g)
            params.weight_grad += _weight_grad_conv(g_ext, xd, kernel, stride)
            params.bias_grad += g.sum(axis=(0, 2, 3, 4))
            if not need_input_grad:
                return (None,)
            return (_gather_conv(g_ext, w, stride, in_dims),)

        tape.record(out, (x,), vjp)
    return out


def relu(x: Tensor5) -> Tensor5:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    out = Tensor5(np.maximum(x.data, 0.0))
    out.requires_grad = x.requires_grad or not x.is_leaf
    tape = active_tape()
    if tape is not None and out.requires_grad:
        mask = x.data > 0.0
        tape.record(out, (x,), lambda g: (g * mask,))
    return out


def add(a: Tensor5, b: Tensor5) -> Tensor5:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor5(a.data + b.data)
    out.requires_grad = any(t.requires_grad or not t.is_leaf for t in (a, b))
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def concat_channels(inputs) -> Tensor5:
    """Concatenate along the channel axis, in list order."""
    inputs = list(inputs)
    if not inputs:
        raise DimensionError("concat_channels needs at least one input")
    head = inputs[0].shape
    for t in inputs[1:]:
        s = t.shape
        if (s[0],) + s[2:] != (head[0],) + head[2:]:
            raise DimensionError(
                f"concat_channels non-channel dims differ: {head} vs {s}")
    out = Tensor5(np.concatenate([t.data for t in inputs], axis=1))
    out.requires_grad = any(t.requires_grad or not t.is_leaf for t in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        sizes = [t.shape[1] for t in inputs]
        offsets = np.cumsum([0] + sizes)

        def vjp(g):
            return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

        tape.record(out, tuple(inputs), vjp)
    return out


def tsum(x: Tensor5) -> Tensor5:
    """Sum of all elements, as a (1,1,1,1,1) tensor."""
    out = Tensor5(x.data.sum().reshape(1, 1, 1, 1, 1))
    out.requires_grad = x.requires_grad or not x.is_leaf
    tape = active_tape()
    if tape is not None and out.requires_grad:
        shape = x.shape
        tape.record(out, (x,), lambda g: (np.full(shape, g.reshape(())),))
    return out


def scalar(value: float) -> Tensor5:
    """Wrap a python float as a scalar Tensor5."""
    return Tensor5(np.full((1, 1, 1, 1, 1), float(value)))
