"""Interpolation-first (IFA) and convolution-first (CFA) pyramid aggregation.

IFA upsamples P3..P5 to the P2 grid, concatenates (P2, P3, P4, P5) and applies
one fused 1x1 conv. CFA applies a 1x1 conv per level at native resolution,
upsamples the three coarse results and sums. Because bilinear interpolation is
linear, splitting the fused kernel column-wise (:func:`reparameterize`) makes
the two orders agree up to float reassociation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import Conv1x1Weights, bilinear_resize, conv1x1
from .tensor import Rng, ShapeError, add, rand_uniform, read_tns, tally, write_tns

LEVELS = ("p2", "p3", "p4", "p5")


@dataclass(frozen=True)
class PyramidFeatures:
    p2: np.ndarray  # (c2, h, w)
    p3: np.ndarray  # (c3, h/2, w/2)
    p4: np.ndarray  # (c4, h/4, w/4)
    p5: np.ndarray  # (c5, h/8, w/8)

    def __post_init__(self):
        for name in LEVELS:
            if getattr(self, name).ndim != 3:
                raise ShapeError(f"{name} must be (c, h, w)")
        _, h, w = self.p2.shape
        if h % 8 or w % 8:
            raise ShapeError(f"base resolution {h}x{w} must be divisible by 8")
        for lvl, name in enumerate(LEVELS[1:], start=1):
            got = getattr(self, name).shape[1:]
            want = (h >> lvl, w >> lvl)
            if got != want:
                raise ShapeError(f"{name} spatial extent {got} != {want}")

    @property
    def levels(self) -> tuple[np.ndarray, ...]:
        return (self.p2, self.p3, self.p4, self.p5)

    @property
    def widths(self) -> tuple[int, int, int, int]:
        return tuple(p.shape[0] for p in self.levels)

    @property
    def size(self) -> tuple[int, int]:
        return self.p2.shape[1], self.p2.shape[2]

    @classmethod
    def random(cls, rng: Rng, widths, h: int, w: int, dtype="f64") -> "PyramidFeatures":
        maps = [rand_uniform(rng, (c, h >> lvl, w >> lvl), -1.0, 1.0, dtype) for lvl, c in enumerate(widths)]
        return cls(*maps)


@dataclass(frozen=True)
class AggregatorWeights:
    """Either one fused (d, sum c) kernel ("ifa") or four (d, c_i) kernels ("cfa").

    The optional bias is stored once and added after aggregation in both forms.
    """

    form: str
    kernels: tuple[np.ndarray, ...]
    widths: tuple[int, int, int, int]
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.form == "ifa":
            if len(self.kernels) != 1 or self.kernels[0].shape[1] != sum(self.widths):
                raise ShapeError("IFA form needs one kernel of width c2+c3+c4+c5")
        elif self.form == "cfa":
            if len(self.kernels) != 4:
                raise ShapeError("CFA form needs four per-level kernels")
            if tuple(k.shape[1] for k in self.kernels) != tuple(self.widths):
                raise ShapeError("CFA block widths do not match the level widths")
            if len({k.shape[0] for k in self.kernels}) != 1:
                raise ShapeError("CFA kernels disagree on output width")
        else:
            raise ValueError(f"unknown aggregator form {self.form!r}")
        if self.bias is not None and self.bias.shape != (self.d,):
            raise ShapeError(f"bias must have shape ({self.d},)")

    @property
    def d(self) -> int:
        return self.kernels[0].shape[0]

    @classmethod
    def random_ifa(cls, rng: Rng, widths, d: int, dtype="f64", bias: bool = False) -> "AggregatorWeights":
        """Fused kernel drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        widths = tuple(int(c) for c in widths)
        bound = 1.0 / np.sqrt(sum(widths))
        fused = rand_uniform(rng, (d, sum(widths)), -bound, bound, dtype)
        b = rand_uniform(rng, (d,), -bound, bound, dtype) if bias else None
        return cls("ifa", (fused,), widths, b)


def _check_widths(p: PyramidFeatures, w: AggregatorWeights):
    if p.widths != tuple(w.widths):
        raise ShapeError(f"pyramid widths {p.widths} != weight widths {tuple(w.widths)}")


def _add_bias(y: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    if bias is None:
        return y
    tally("add", y.size)
    return y + bias[:, None, None]


def aggregate_ifa(p: PyramidFeatures, w: AggregatorWeights) -> np.ndarray:
    if w.form != "ifa":
        raise ValueError("aggregate_ifa needs IFA-form weights")
    _check_widths(p, w)
    h, wd = p.size
    ups = [p.p2] + [bilinear_resize(x, h, wd) for x in (p.p3, p.p4, p.p5)]
    cat = np.concatenate(ups, axis=0)
    y = conv1x1(cat, Conv1x1Weights(w.kernels[0]))
    return _add_bias(y, w.bias)


def aggregate_cfa(p: PyramidFeatures, w: AggregatorWeights) -> np.ndarray:
    if w.form != "cfa":
        raise ValueError("aggregate_cfa needs CFA-form weights")
    _check_widths(p, w)
    h, wd = p.size
    y = conv1x1(p.p2, Conv1x1Weights(w.kernels[0]))
    for x, k in zip((p.p3, p.p4, p.p5), w.kernels[1:]):
        y = add(y, bilinear_resize(conv1x1(x, Conv1x1Weights(k)), h, wd))
    return _add_bias(y, w.bias)


def reparameterize(w: AggregatorWeights) -> AggregatorWeights:
    """Split a fused IFA kernel column-wise into the four CFA kernels."""
    if w.form != "ifa":
        raise ValueError("reparameterize expects IFA-form weights")
    fused = w.kernels[0]
    edges = np.cumsum((0,) + tuple(w.widths))
    blocks = tuple(np.ascontiguousarray(fused[:, a:b]) for a, b in zip(edges[:-1], edges[1:]))
    return AggregatorWeights("cfa", blocks, tuple(w.widths), w.bias)


def fuse(w: AggregatorWeights) -> AggregatorWeights:
    """Inverse of :func:`reparameterize`."""
    if w.form != "cfa":
        raise ValueError("fuse expects CFA-form weights")
    return AggregatorWeights("ifa", (np.concatenate(w.kernels, axis=1),), tuple(w.widths), w.bias)


# fixture I/O: manifest.json + one .tns per tensor


def save_weights(w: AggregatorWeights, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = ["fused"] if w.form == "ifa" else ["w2", "w3", "w4", "w5"]
    for name, k in zip(names, w.kernels):
        write_tns(directory / f"{name}.tns", k)
    manifest = {
        "form": w.form,
        "widths": list(w.widths),
        "bias": w.bias is not None,
        "tensors": {name: f"{name}.tns" for name in names},
    }
    if w.bias is not None:
        write_tns(directory / "bias.tns", w.bias)
        manifest["tensors"]["bias"] = "bias.tns"
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_weights(path) -> AggregatorWeights:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    m = json.loads(path.read_text())
    names = ["fused"] if m["form"] == "ifa" else ["w2", "w3", "w4", "w5"]
    kernels = tuple(read_tns(path.parent / m["tensors"][name]) for name in names)
    bias = read_tns(path.parent / m["tensors"]["bias"]) if m.get("bias") else None
    return AggregatorWeights(m["form"], kernels, tuple(m["widths"]), bias)


def save_pyramid(p: PyramidFeatures, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, x in zip(LEVELS, p.levels):
        write_tns(directory / f"{name}.tns", x)
    path = directory / "pyramid.json"
    path.write_text(json.dumps({name: f"{name}.tns" for name in LEVELS}, indent=2))
    return path


def load_pyramid(path) -> PyramidFeatures:
    path = Path(path)
    if path.is_dir():
        path = path / "pyramid.json"
    m = json.loads(path.read_text())
    return PyramidFeatures(*(read_tns(path.parent / m[name]) for name in LEVELS))
