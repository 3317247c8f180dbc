"""Interpolation and convolution kernels: bilinear resize, 1x1 conv, 1-D dynamic conv."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, matmul, reshape, summation_mode, tally


@dataclass(frozen=True)
class Conv1x1Weights:
    kernel: np.ndarray  # (out_ch, in_ch)
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kernel.ndim != 2:
            raise ShapeError(f"1x1 kernel must be 2-D, got {self.kernel.shape}")
        if self.bias is not None and self.bias.shape != (self.kernel.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} != ({self.kernel.shape[0]},)")

    @property
    def out_ch(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_ch(self) -> int:
        return self.kernel.shape[1]


def _axis_taps(n_in: int, n_out: int):
    """Half-pixel source taps along one axis: (lo index, hi index, lo weight, hi weight)."""
    xd = np.arange(n_out, dtype=np.float64)
    xs = (xd + 0.5) * (n_in / n_out) - 0.5
    xs = np.clip(xs, 0.0, n_in - 1)
    lo = np.floor(xs).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = xs - lo
    return lo, hi, 1.0 - frac, frac


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a (c, h, w) map with half-pixel centres and edge clamping.

    Each output is the four-neighbour weighted sum
    ``w00*v00 + w01*v01 + w10*v10 + w11*v11`` (evaluated left to right), with
    ``wAB = wyA * wxB`` so the weights sum to one.
    """
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects (c, h, w), got {x.shape}")
    c, h, w = x.shape
    if min(h, w, out_h, out_w) < 1:
        raise ShapeError("extents must be positive")
    tally("interp", 4 * c * out_h * out_w)
    y0, y1, wy0, wy1 = _axis_taps(h, out_h)
    x0, x1, wx0, wx1 = _axis_taps(w, out_w)
    dt = x.dtype
    w00 = np.outer(wy0, wx0).astype(dt)
    w01 = np.outer(wy0, wx1).astype(dt)
    w10 = np.outer(wy1, wx0).astype(dt)
    w11 = np.outer(wy1, wx1).astype(dt)
    rows0 = np.take(x, y0, axis=1)
    rows1 = np.take(x, y1, axis=1)
    out = w00 * np.take(rows0, x0, axis=2)
    out += w01 * np.take(rows0, x1, axis=2)
    out += w10 * np.take(rows1, x0, axis=2)
    out += w11 * np.take(rows1, x1, axis=2)
    return out


def conv1x1(x: np.ndarray, w: Conv1x1Weights) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeError(f"conv1x1 expects (c, h, w), got {x.shape}")
    c, h, wd = x.shape
    if c != w.in_ch:
        raise ShapeError(f"conv1x1 channel mismatch: input {c}, kernel {w.in_ch}")
    y = matmul(w.kernel, reshape(x, (c, h * wd)))
    if w.bias is not None:
        tally("add", y.size)
        y = y + w.bias[:, None]
    return y.reshape(w.out_ch, h, wd)


def _pad_hidden(v: np.ndarray, t: int) -> np.ndarray:
    if t < 1 or t % 2 == 0:
        raise ValueError(f"tap count must be odd and positive, got {t}")
    half = (t - 1) // 2
    return np.pad(v, ((0, 0), (half, half)))


def dyconv1d(v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Dynamic 1-D conv over the hidden axis with a full (n, n, t) kernel.

    ``O[i, j] = sum_p sum_q K[i, p, q] * Vpad[p, j + q]`` with symmetric zero
    padding of (t - 1) / 2, accumulated p-major then q.
    """
    if v.ndim != 2 or k.ndim != 3:
        raise ShapeError(f"dyconv1d expects v (n, d) and k (n, n, t), got {v.shape}, {k.shape}")
    n, d = v.shape
    t = k.shape[2]
    if k.shape[:2] != (n, n):
        raise ShapeError(f"kernel {k.shape} does not match {n} tokens")
    vpad = _pad_hidden(v, t)
    tally("mac", n * n * t * d)
    dt = np.result_type(v, k)
    if summation_mode() == "blas":
        cols = np.stack([vpad[:, q : q + d] for q in range(t)], axis=1)  # (n, t, d)
        return np.ascontiguousarray(k.reshape(n, n * t) @ cols.reshape(n * t, d), dtype=dt)
    out = np.zeros((n, d), dtype=dt)
    for p in range(n):
        for q in range(t):
            out += k[:, p, q, None] * vpad[p, None, q : q + d]
    return out


def dyconv1d_depthwise(v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Per-token 1-D conv with an (n, 1, t) kernel; no cross-token mixing."""
    if v.ndim != 2 or k.ndim != 3 or k.shape[1] != 1:
        raise ShapeError(f"depthwise expects v (n, d) and k (n, 1, t), got {v.shape}, {k.shape}")
    n, d = v.shape
    if k.shape[0] != n:
        raise ShapeError(f"kernel {k.shape} does not match {n} tokens")
    t = k.shape[2]
    vpad = _pad_hidden(v, t)
    tally("mac", n * t * d)
    out = np.zeros((n, d), dtype=np.result_type(v, k))
    for q in range(t):
        out += k[:, 0, q, None] * vpad[:, q : q + d]
    return out


def dyconv1d_pointwise(v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Token mixing with an (n, n, 1) kernel, i.e. ``K[:, :, 0] @ v``."""
    if v.ndim != 2 or k.ndim != 3 or k.shape[2] != 1:
        raise ShapeError(f"pointwise expects v (n, d) and k (n, n, 1), got {v.shape}, {k.shape}")
    n = v.shape[0]
    if k.shape[:2] != (n, n):
        raise ShapeError(f"kernel {k.shape} does not match {n} tokens")
    return matmul(np.ascontiguousarray(k[:, :, 0]), v)


def dyconv2d_masks(s: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Per-pixel dot product of each (d,) kernel with the feature column of s (d, h, w)."""
    if s.ndim != 3 or kernels.ndim != 2:
        raise ShapeError(f"expected s (d, h, w) and kernels (n, d), got {s.shape}, {kernels.shape}")
    d, h, w = s.shape
    if kernels.shape[1] != d:
        raise ShapeError(f"kernel width {kernels.shape[1]} != feature channels {d}")
    return matmul(kernels, reshape(s, (d, h * w))).reshape(kernels.shape[0], h, w)
