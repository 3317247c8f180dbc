"""Dense row-major tensors, a SplitMix64 generator and the shared numeric primitives.

Tensors are plain C-contiguous numpy arrays of float32 or float64. Every
reduction that feeds an oracle comparison goes through :func:`matmul`, whose
default "ordered" mode accumulates in ascending index order so results are
bit-reproducible against naive loop oracles. The "blas" mode hands the product
to BLAS and is only meant for timing at realistic sizes.
"""

from __future__ import annotations

import contextlib
import json
from contextvars import ContextVar
from pathlib import Path

import numpy as np

DTYPES = {"f32": np.dtype(np.float32), "f64": np.dtype(np.float64)}

_MODE: ContextVar[str] = ContextVar("summation_mode", default="ordered")
_TALLY: ContextVar[dict | None] = ContextVar("flop_tally", default=None)


class ShapeError(ValueError):
    """Raised when tensor extents are inconsistent with an operation."""


# --------------------------------------------------------------------------
# summation mode and op tallies


@contextlib.contextmanager
def summation(mode: str):
    """Temporarily switch reduction strategy ("ordered" or "blas")."""
    if mode not in ("ordered", "blas"):
        raise ValueError(f"unknown summation mode {mode!r}")
    token = _MODE.set(mode)
    try:
        yield
    finally:
        _MODE.reset(token)


def summation_mode() -> str:
    return _MODE.get()


def tally(kind: str, count: int) -> None:
    """Record ``count`` operations of ``kind`` if a counting context is active."""
    t = _TALLY.get()
    if t is not None:
        t[kind] = t.get(kind, 0) + int(count)


@contextlib.contextmanager
def tallying():
    """Collect op tallies for the enclosed block; yields the live dict."""
    tally_dict: dict[str, int] = {}
    token = _TALLY.set(tally_dict)
    try:
        yield tally_dict
    finally:
        _TALLY.reset(token)


# --------------------------------------------------------------------------
# construction helpers


def as_tensor(x, dtype=None) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


def resolve_dtype(dtype) -> np.dtype:
    if isinstance(dtype, str) and dtype in DTYPES:
        return DTYPES[dtype]
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    return dt


def dtype_tag(dtype) -> str:
    return "f32" if np.dtype(dtype) == np.float32 else "f64"


# --------------------------------------------------------------------------
# SplitMix64

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream.

    The k-th output (k = 1, 2, ...) is ``mix(seed + k * 0x9E3779B97F4A7C15)``,
    so blocks of outputs can be produced in one vectorised step.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self, count: int) -> np.ndarray:
        ks = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = _mix(np.uint64(self.state) + ks * _GAMMA)
        self.state = (self.state + count * int(_GAMMA)) & _MASK64
        return z

    def next_u64_scalar(self) -> int:
        return int(self.next_u64(1)[0])

    def uniform01(self, count: int) -> np.ndarray:
        """Doubles in [0, 1) from the top 53 bits."""
        return (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integers(self, lo: int, hi: int, count: int) -> np.ndarray:
        """Integers in [lo, hi) (multiply-shift reduction, negligible bias)."""
        span = hi - lo
        if span <= 0:
            raise ValueError("empty integer range")
        u = self.uniform01(count)
        return np.minimum((u * span).astype(np.int64), span - 1) + lo

    def spawn(self) -> "Rng":
        return Rng(self.next_u64_scalar())


def rand_uniform(rng: Rng, shape, lo: float = -1.0, hi: float = 1.0, dtype="f64") -> np.ndarray:
    """Uniform values in [lo, hi), deterministic per generator state."""
    if not lo < hi:
        raise ValueError(f"invalid range [{lo}, {hi})")
    dt = resolve_dtype(dtype)
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    count = int(np.prod(shape, dtype=np.int64))
    u = rng.uniform01(count)
    vals = (lo + (hi - lo) * u).astype(dt)
    # rounding (or the f32 cast) can land exactly on hi
    top = np.nextafter(dt.type(hi), dt.type(lo))
    vals = np.where(vals >= dt.type(hi), top, vals)
    vals = np.maximum(vals, dt.type(lo))
    return vals.reshape(shape)


# --------------------------------------------------------------------------
# primitives


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(m, k) @ (k, p) with ascending-k accumulation in "ordered" mode."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    m, k = a.shape
    p = b.shape[1]
    tally("mac", m * k * p)
    dt = np.result_type(a, b)
    if _MODE.get() == "blas":
        return np.ascontiguousarray(a @ b, dtype=dt)
    out = np.zeros((m, p), dtype=dt)
    for kk in range(k):
        out += a[:, kk : kk + 1] * b[kk : kk + 1, :]
    return out


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Elementwise accumulation add (tallied as one op per element)."""
    if x.shape != y.shape:
        raise ShapeError(f"add shape mismatch {x.shape} vs {y.shape}")
    tally("add", x.size)
    return x + y


def softmax_rows(x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeError("softmax_rows expects a 2-D tensor")
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def reshape(x: np.ndarray, new_shape) -> np.ndarray:
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {new_shape}")
    return np.ascontiguousarray(x).reshape(new_shape)


def layer_norm(x: np.ndarray, gamma=None, beta=None, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    y = (x - mu) / np.sqrt(var + eps)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y.astype(x.dtype, copy=False)


# --------------------------------------------------------------------------
# .tns fixtures


def write_tns(path, x: np.ndarray) -> Path:
    """Write ``path`` (JSON manifest) plus a sibling ``.bin`` with raw LE data."""
    path = Path(path)
    x = np.ascontiguousarray(x)
    tag = dtype_tag(x.dtype)
    bin_path = path.with_suffix(".bin")
    x.astype(x.dtype.newbyteorder("<"), copy=False).tofile(bin_path)
    manifest = {"dtype": tag, "shape": list(x.shape), "data": bin_path.name}
    path.write_text(json.dumps(manifest))
    return path


def read_tns(path) -> np.ndarray:
    path = Path(path)
    manifest = json.loads(path.read_text())
    try:
        dt = DTYPES[manifest["dtype"]].newbyteorder("<")
        shape = tuple(int(s) for s in manifest["shape"])
        data_path = path.parent / manifest["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed tensor manifest {path}: {exc}") from exc
    raw = np.fromfile(data_path, dtype=dt)
    if raw.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeError(f"{data_path} holds {raw.size} values, manifest says {shape}")
    return raw.astype(dt.newbyteorder("="), copy=False).reshape(shape)
