"""Independent brute-force oracles shared by the test modules.

Everything here is deliberately naive (explicit nested loops) and written
against the mathematical definitions, not against the package internals.
"""

import numpy as np


def conv3d_oracle(x, weight, bias, stride, padding):
    """Direct cross-correlation: six nested loops over output coordinates."""
    n, ci, L, H, W = x.shape
    co, ci_w, kl, kh, kw = weight.shape
    assert ci == ci_w
    sl, sh, sw = stride
    pl, ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pl), (ph, ph), (pw, pw)))
    ol = (L + 2 * pl - kl) // sl + 1
    oh = (H + 2 * ph - kh) // sh + 1
    ow = (W + 2 * pw - kw) // sw + 1
    out = np.zeros((n, co, ol, oh, ow))
    for b in range(n):
        for o in range(co):
            for a in range(ol):
                for r in range(oh):
                    for c in range(ow):
                        acc = 0.0
                        for ic in range(ci):
                            for i in range(kl):
                                for j in range(kh):
                                    for k in range(kw):
                                        acc += (weight[o, ic, i, j, k]
                                                * xp[b, ic, a * sl + i, r * sh + j, c * sw + k])
                        out[b, o, a, r, c] = acc + bias[o]
    return out


def conv3d_transposed_oracle(x, weight, bias, stride, padding, output_padding):
    """Direct spread-and-sum transposed convolution.

    weight is (in_channels, out_channels, kl, kh, kw); every input element
    deposits weight * value into the output at input_pos*stride + offset,
    then `padding` is trimmed from both ends and `output_padding` extends
    the far end.
    """
    n, a_ch, L, H, W = x.shape
    a_w, b_ch, kl, kh, kw = weight.shape
    assert a_ch == a_w
    sl, sh, sw = stride
    pl, ph, pw = padding
    ql, qh, qw = output_padding
    fl = (L - 1) * sl + kl + ql
    fh = (H - 1) * sh + kh + qh
    fw = (W - 1) * sw + kw + qw
    full = np.zeros((n, b_ch, fl, fh, fw))
    for bb in range(n):
        for ia in range(a_ch):
            for a in range(L):
                for r in range(H):
                    for c in range(W):
                        v = x[bb, ia, a, r, c]
                        for ob in range(b_ch):
                            for i in range(kl):
                                for j in range(kh):
                                    for k in range(kw):
                                        full[bb, ob, a * sl + i, r * sh + j, c * sw + k] += (
                                            v * weight[ia, ob, i, j, k])
    out = full[:, :, pl:fl - pl, ph:fh - ph, pw:fw - pw].copy()
    out += bias[None, :, None, None, None]
    return out


def central_diff(f, x, h=1e-5):
    """Central finite differences of scalar f at array x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f(x)
        x[idx] = orig - h
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g


def max_rel_err(analytic, numeric, floor=1e-6):
    """Largest elementwise |a-n| / max(|a|+|n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(n), floor)
    return float(np.max(np.abs(a - n) / denom))
