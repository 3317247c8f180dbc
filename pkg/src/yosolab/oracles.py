"""Naive reference implementations used to cross-check the vectorised kernels.

Everything here is written as explicit scalar loops over the defining sums,
in ascending index order, using numpy scalars of the input dtype so results
round exactly like the fast paths that promise bit-equality.
"""

from __future__ import annotations

import math

import numpy as np


def matmul_loop(a, b):
    m, k = a.shape
    p = b.shape[1]
    dt = np.result_type(a, b).type
    out = np.zeros((m, p), dtype=dt)
    for i in range(m):
        for j in range(p):
            acc = dt(0)
            for kk in range(k):
                acc = dt(acc + dt(a[i, kk] * b[kk, j]))
            out[i, j] = acc
    return out


def softmax_naive(row):
    row = [float(x) for x in row]
    e = [math.exp(x) for x in row]
    s = sum(e)
    return [x / s for x in e]


def bilinear_pixel(x, out_h, out_w, ch, yd, xd):
    """Single output value of a half-pixel bilinear resize, four-term form."""
    c, h, w = x.shape
    dt = x.dtype.type
    ys = min(max((yd + 0.5) * (h / out_h) - 0.5, 0.0), h - 1)
    xs = min(max((xd + 0.5) * (w / out_w) - 0.5, 0.0), w - 1)
    y1, x1 = math.floor(ys), math.floor(xs)
    y2, x2 = min(y1 + 1, h - 1), min(x1 + 1, w - 1)
    fy, fx = ys - y1, xs - x1
    w11 = dt((1.0 - fy) * (1.0 - fx))
    w12 = dt((1.0 - fy) * fx)
    w21 = dt(fy * (1.0 - fx))
    w22 = dt(fy * fx)
    acc = dt(w11 * x[ch, y1, x1])
    acc = dt(acc + dt(w12 * x[ch, y1, x2]))
    acc = dt(acc + dt(w21 * x[ch, y2, x1]))
    acc = dt(acc + dt(w22 * x[ch, y2, x2]))
    return acc


def bilinear_matrix_form(x, out_h, out_w, ch, yd, xd):
    """Same value through the (x2-x0, x0-x1) M (y2-y0, y0-y1)^T form, in float64.

    Rows of M run over the vertical neighbours here. Degenerate spans (edge
    clamping) collapse to a single neighbour.
    """
    c, h, w = x.shape
    y0 = min(max((yd + 0.5) * (h / out_h) - 0.5, 0.0), h - 1)
    x0 = min(max((xd + 0.5) * (w / out_w) - 0.5, 0.0), w - 1)
    y1 = math.floor(y0)
    x1 = math.floor(x0)
    y2, x2 = y1 + 1, x1 + 1
    yy2, xx2 = min(y2, h - 1), min(x2, w - 1)
    m = np.array(
        [[x[ch, y1, x1], x[ch, y1, xx2]], [x[ch, yy2, x1], x[ch, yy2, xx2]]],
        dtype=np.float64,
    )
    left = np.array([y2 - y0, y0 - y1])
    right = np.array([x2 - x0, x0 - x1])
    return float(left @ m @ right) / ((y2 - y1) * (x2 - x1))


def conv1x1_loop(x, kernel, bias=None):
    c, h, w = x.shape
    dt = np.result_type(x, kernel).type
    out = np.zeros((kernel.shape[0], h, w), dtype=dt)
    for o in range(kernel.shape[0]):
        for yy in range(h):
            for xx in range(w):
                acc = dt(0)
                for i in range(c):
                    acc = dt(acc + dt(kernel[o, i] * x[i, yy, xx]))
                if bias is not None:
                    acc = dt(acc + bias[o])
                out[o, yy, xx] = acc
    return out


def dyconv1d_loop(v, k):
    """Literal double sum over tokens p and taps q with symmetric zero padding."""
    n, d = v.shape
    t = k.shape[2]
    half = (t - 1) // 2
    dt = np.result_type(v, k).type
    out = np.zeros((n, d), dtype=dt)
    for i in range(n):
        for j in range(d):
            acc = dt(0)
            for p in range(n):
                for q in range(t):
                    src = j + q - half
                    val = v[p, src] if 0 <= src < d else dt(0)
                    acc = dt(acc + dt(k[i, p, q] * val))
            out[i, j] = acc
    return out


def depthwise_as_full(kd):
    """Embed an (n, 1, t) depthwise kernel as the full (n, n, t) kernel."""
    n, _, t = kd.shape
    full = np.zeros((n, n, t), dtype=kd.dtype)
    for i in range(n):
        full[i, i, :] = kd[i, 0, :]
    return full


def separable_as_full(kd, kp):
    """Full kernel of pointwise-after-depthwise: K[i, p, q] = Kp[i, p] * Kd[p, q]."""
    return kp[:, :, 0][:, :, None] * kd[:, 0, :][None, :, :]


def mhca_per_head(q, v, wq, wk, wv, wo, heads):
    """Cross-attention with every head computed independently in float64."""
    q = q.astype(np.float64)
    v = v.astype(np.float64)
    n, d = q.shape
    dh = d // heads
    outs = []
    for i in range(heads):
        sl = slice(i * dh, (i + 1) * dh)
        qi = q @ wq[:, sl].astype(np.float64)
        ki = v @ wk[:, sl].astype(np.float64)
        vi = v @ wv[:, sl].astype(np.float64)
        scores = qi @ ki.T / math.sqrt(d)
        corr = np.array([softmax_naive(r) for r in scores])
        outs.append(corr @ vi)
    return np.concatenate(outs, axis=1) @ wo.astype(np.float64)


def pre_attention_matmuls(s, q):
    """Masked features from two explicit loop matmuls: A = Q r(S); V = r(bin(A)) r(S)^T."""
    d, h, w = s.shape
    rs = s.reshape(d, h * w)
    a = matmul_loop(q, rs)
    dt = s.dtype.type
    binary = np.zeros_like(a)
    for idx, val in np.ndenumerate(a):
        hs = min(max(dt(val / dt(6.0)) + dt(0.5), 0.0), 1.0)
        binary[idx] = 1.0 if hs >= 0.5 else 0.0
    return matmul_loop(binary, np.ascontiguousarray(rs.T))


def layer_norm_loop(x, eps=1e-5):
    out = np.empty_like(x, dtype=np.float64)
    for i, row in enumerate(x.astype(np.float64)):
        mu = sum(row) / len(row)
        var = sum((r - mu) ** 2 for r in row) / len(row)
        out[i] = [(r - mu) / math.sqrt(var + eps) for r in row]
    return out
