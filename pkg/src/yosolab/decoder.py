"""Separable dynamic decoder: pre-attention, the attention variants, post-attention.

Weight matrices are right-multiplied (``x @ W``), shaped (in, out).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import dyconv1d, dyconv1d_depthwise, dyconv1d_pointwise, dyconv2d_masks
from .tensor import (
    Rng,
    ShapeError,
    add,
    layer_norm,
    matmul,
    rand_uniform,
    read_tns,
    reshape,
    resolve_dtype,
    softmax_rows,
    write_tns,
)

VARIANTS = ("mhca", "dca", "sdca", "pdca", "ddca")


@dataclass(frozen=True)
class DecoderConfig:
    n: int = 100
    d: int = 256
    t: int = 3
    blocks: int = 2
    stages: int = 2
    heads: int = 8
    ffn: int = 2048
    classes: int = 133
    attention: str = "sdca"

    def __post_init__(self):
        for name in ("n", "d", "t", "blocks", "stages", "heads", "ffn", "classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.t % 2 == 0:
            raise ValueError("t must be odd")
        if self.attention not in VARIANTS:
            raise ValueError(f"unknown attention variant {self.attention!r}")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")


@dataclass
class AttentionWeights:
    """Projection weights for one attention block.

    mhca: wq, wk, wv, wo (d, d) with ``heads`` column groups;
    dca: w (d, n*t); sdca: wd (d, t) and wp (d, n); pdca: wp; ddca: wd.
    """

    variant: str
    wq: np.ndarray | None = None
    wk: np.ndarray | None = None
    wv: np.ndarray | None = None
    wo: np.ndarray | None = None
    w: np.ndarray | None = None
    wd: np.ndarray | None = None
    wp: np.ndarray | None = None
    heads: int = 1

    _REQUIRED = {
        "mhca": ("wq", "wk", "wv", "wo"),
        "dca": ("w",),
        "sdca": ("wd", "wp"),
        "pdca": ("wp",),
        "ddca": ("wd",),
    }

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown attention variant {self.variant!r}")
        missing = [m for m in self._REQUIRED[self.variant] if getattr(self, m) is None]
        if missing:
            raise ValueError(f"{self.variant} weights missing {missing}")
        if self.wd is not None and self.wd.shape[1] % 2 == 0:
            raise ValueError("depthwise tap count must be odd")

    def tensors(self) -> dict[str, np.ndarray]:
        return {m: getattr(self, m) for m in self._REQUIRED[self.variant]}

    @classmethod
    def random(cls, variant: str, rng: Rng, n: int, d: int, t: int, heads: int = 1, dtype="f64"):
        bound = 1.0 / np.sqrt(d)
        shapes = {
            "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
            "w": (d, n * t), "wd": (d, t), "wp": (d, n),
        }
        mats = {m: rand_uniform(rng, shapes[m], -bound, bound, dtype) for m in cls._REQUIRED[variant]}
        return cls(variant, heads=heads if variant == "mhca" else 1, **mats)


# ---------------------------------------------------------------------------
# pre-attention and the attention variants


def hard_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.clip(x / 6.0 + 0.5, 0.0, 1.0).astype(x.dtype, copy=False)


def attention_masks(s: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Binarised attention maps: hard sigmoid then threshold 0.5 (inclusive)."""
    a = dyconv2d_masks(s, q)
    return (hard_sigmoid(a) >= 0.5).astype(s.dtype)


def pre_attention(s: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Masked features V (n, d): feature sums over each proposal's active pixels."""
    d, h, w = s.shape
    m = attention_masks(s, q)
    return matmul(reshape(m, (q.shape[0], h * w)), np.ascontiguousarray(reshape(s, (d, h * w)).T))


def mhca_heads(d: int, t: int) -> int:
    """Head count for an MHCA block standing in for a t-tap conv block.

    Uses t when it divides d, otherwise the smallest divisor of d above t;
    d itself when t > d.
    """
    return next((h for h in range(t, d + 1) if d % h == 0), d)


def _head_slices(d: int, heads: int):
    if d % heads:
        raise ShapeError(f"hidden dim {d} not divisible by {heads} heads")
    step = d // heads
    return [slice(i * step, (i + 1) * step) for i in range(heads)]


def mhca(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """Multi-head cross-attention; scores are scaled by 1/sqrt(d)."""
    n, d = q.shape
    heads = _head_slices(d, w.heads)
    qp = matmul(q, w.wq)
    kp = matmul(v, w.wk)
    vp = matmul(v, w.wv)
    scale = q.dtype.type(1.0 / np.sqrt(d))
    outs = []
    for sl in heads:
        qi = np.ascontiguousarray(qp[:, sl])
        ki = np.ascontiguousarray(kp[:, sl])
        vi = np.ascontiguousarray(vp[:, sl])
        corr = softmax_rows(matmul(qi, np.ascontiguousarray(ki.T)) * scale)
        outs.append(matmul(corr, vi))
    return matmul(np.concatenate(outs, axis=1), w.wo)


def _check_width(mat: np.ndarray, want: int, label: str):
    if mat.shape[1] != want:
        raise ShapeError(f"{label} width {mat.shape[1]} != {want}")


def dca(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    n = q.shape[0]
    if w.w.shape[1] % n:
        raise ShapeError(f"W width {w.w.shape[1]} is not a multiple of n={n}")
    t = w.w.shape[1] // n
    k = reshape(matmul(q, w.w), (n, n, t))
    return dyconv1d(v, k)


def _depthwise_branch(q, v, wd):
    n = q.shape[0]
    return dyconv1d_depthwise(v, reshape(matmul(q, wd), (n, 1, wd.shape[1])))


def _pointwise_branch(q, v, wp):
    n = q.shape[0]
    _check_width(wp, n, "Wp")
    return dyconv1d_pointwise(v, reshape(matmul(q, wp), (n, n, 1)))


def sdca(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    """Depthwise dynamic conv, then pointwise (token-mixing) dynamic conv."""
    _check_width(w.wp, q.shape[0], "Wp")
    return _pointwise_branch(q, _depthwise_branch(q, v, w.wd), w.wp)


def pdca(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    return _pointwise_branch(q, v, w.wp)


def ddca(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    return _depthwise_branch(q, v, w.wd)


ATTENTION = {"mhca": mhca, "dca": dca, "sdca": sdca, "pdca": pdca, "ddca": ddca}


def attend(q: np.ndarray, v: np.ndarray, w: AttentionWeights) -> np.ndarray:
    if q.shape != v.shape:
        raise ShapeError(f"Q {q.shape} and V {v.shape} must match")
    return ATTENTION[w.variant](q, v, w)


# ---------------------------------------------------------------------------
# blocks, post-attention, full decode


@dataclass
class Norm:
    gamma: np.ndarray
    beta: np.ndarray

    @classmethod
    def identity(cls, d: int, dtype) -> "Norm":
        dt = resolve_dtype(dtype)
        return cls(np.ones(d, dtype=dt), np.zeros(d, dtype=dt))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return layer_norm(x, self.gamma, self.beta)


@dataclass
class BlockWeights:
    attn: AttentionWeights
    norm: Norm


@dataclass
class PostAttentionWeights:
    attn: AttentionWeights  # mhca, self-attention
    norm1: Norm
    w1: np.ndarray  # (d, ffn)
    b1: np.ndarray
    w2: np.ndarray  # (ffn, d)
    b2: np.ndarray
    norm2: Norm


@dataclass
class DecoderWeights:
    blocks: list[BlockWeights]
    post: PostAttentionWeights
    cls_w: np.ndarray  # (d, classes)
    cls_b: np.ndarray
    proposals: np.ndarray | None = None  # learnable initial kernels (n, d)

    @classmethod
    def random(cls, cfg: DecoderConfig, rng: Rng, dtype="f64", variants=None) -> "DecoderWeights":
        variants = variants or [cfg.attention] * cfg.blocks
        if len(variants) != cfg.blocks:
            raise ValueError("need one variant per attention block")
        n, d = cfg.n, cfg.d
        blocks = [
            BlockWeights(
                AttentionWeights.random(v, rng, n, d, cfg.t, mhca_heads(d, cfg.t), dtype),
                Norm.identity(d, dtype),
            )
            for v in variants
        ]
        b1 = 1.0 / np.sqrt(d)
        b2 = 1.0 / np.sqrt(cfg.ffn)
        post = PostAttentionWeights(
            attn=AttentionWeights.random("mhca", rng, n, d, cfg.t, cfg.heads, dtype),
            norm1=Norm.identity(d, dtype),
            w1=rand_uniform(rng, (d, cfg.ffn), -b1, b1, dtype),
            b1=rand_uniform(rng, (cfg.ffn,), -b1, b1, dtype),
            w2=rand_uniform(rng, (cfg.ffn, d), -b2, b2, dtype),
            b2=rand_uniform(rng, (d,), -b2, b2, dtype),
            norm2=Norm.identity(d, dtype),
        )
        cls_w = rand_uniform(rng, (d, cfg.classes), -b1, b1, dtype)
        cls_b = rand_uniform(rng, (cfg.classes,), -b1, b1, dtype)
        proposals = rand_uniform(rng, (n, d), -1.0, 1.0, dtype)
        return cls(blocks, post, cls_w, cls_b, proposals)


def feed_forward(x: np.ndarray, w: PostAttentionWeights) -> np.ndarray:
    hidden = np.maximum(matmul(x, w.w1) + w.b1, 0)
    return matmul(hidden, w.w2) + w.b2


def post_attention(kernels: np.ndarray, w: PostAttentionWeights) -> np.ndarray:
    """Self-attention + residual + norm, then 2-layer ReLU FFN + residual + norm."""
    x = w.norm1(add(kernels, mhca(kernels, kernels, w.attn)))
    return w.norm2(add(x, feed_forward(x, w)))


def attention_stack(q: np.ndarray, v: np.ndarray, blocks: list[BlockWeights]) -> np.ndarray:
    x = q
    for blk in blocks:
        x = blk.norm(add(x, attend(x, v, blk.attn)))
    return x


def decode_stage(s: np.ndarray, q: np.ndarray, weights: DecoderWeights) -> np.ndarray:
    v = pre_attention(s, q)
    return post_attention(attention_stack(q, v, weights.blocks), weights.post)


@dataclass
class DecoderOutput:
    masks: np.ndarray  # (n, h, w) logits
    binary: np.ndarray  # (n, h, w) in {0, 1}
    class_probs: np.ndarray  # (n, l)
    kernels: np.ndarray = field(repr=False, default=None)


def logistic(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid exp overflow
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def head(s: np.ndarray, q: np.ndarray, weights: DecoderWeights) -> DecoderOutput:
    masks = dyconv2d_masks(s, q)
    binary = (logistic(masks) >= 0.5).astype(np.uint8)
    probs = softmax_rows(matmul(q, weights.cls_w) + weights.cls_b)
    return DecoderOutput(masks, binary, probs, q)


def decode(s: np.ndarray, proposals: np.ndarray | None, cfg: DecoderConfig, weights: DecoderWeights) -> DecoderOutput:
    """Run ``cfg.stages`` refinement stages with shared weights, then predict masks and classes."""
    q = weights.proposals if proposals is None else proposals
    if q is None:
        raise ValueError("no proposal kernels supplied")
    if q.shape != (cfg.n, cfg.d) or s.shape[0] != cfg.d:
        raise ShapeError(f"proposals {q.shape} / features {s.shape} inconsistent with n={cfg.n}, d={cfg.d}")
    if len(weights.blocks) != cfg.blocks:
        raise ShapeError(f"config asks for {cfg.blocks} blocks, weights carry {len(weights.blocks)}")
    for _ in range(cfg.stages):
        q = decode_stage(s, q, weights)
    return head(s, q, weights)


# ---------------------------------------------------------------------------
# weight bundle I/O


def _flatten(weights: DecoderWeights) -> tuple[dict[str, np.ndarray], dict]:
    tensors: dict[str, np.ndarray] = {}
    meta: dict = {"blocks": []}
    for i, blk in enumerate(weights.blocks):
        for name, arr in blk.attn.tensors().items():
            tensors[f"block{i}.{name}"] = arr
        tensors[f"block{i}.norm.gamma"] = blk.norm.gamma
        tensors[f"block{i}.norm.beta"] = blk.norm.beta
        meta["blocks"].append({"variant": blk.attn.variant, "heads": blk.attn.heads})
    p = weights.post
    for name, arr in p.attn.tensors().items():
        tensors[f"post.attn.{name}"] = arr
    meta["post_heads"] = p.attn.heads
    for name in ("w1", "b1", "w2", "b2"):
        tensors[f"post.{name}"] = getattr(p, name)
    for k, norm in (("norm1", p.norm1), ("norm2", p.norm2)):
        tensors[f"post.{k}.gamma"] = norm.gamma
        tensors[f"post.{k}.beta"] = norm.beta
    tensors["cls.w"] = weights.cls_w
    tensors["cls.b"] = weights.cls_b
    if weights.proposals is not None:
        tensors["proposals"] = weights.proposals
    return tensors, meta


def save_decoder(cfg: DecoderConfig, weights: DecoderWeights, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors, meta = _flatten(weights)
    files = {}
    for name, arr in tensors.items():
        fname = f"{name}.tns"
        write_tns(directory / fname, arr)
        files[name] = fname
    manifest = {"config": asdict(cfg), "layout": meta, "tensors": files}
    path = directory / "decoder.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_decoder(path) -> tuple[DecoderConfig, DecoderWeights]:
    path = Path(path)
    if path.is_dir():
        path = path / "decoder.json"
    m = json.loads(path.read_text())
    cfg = DecoderConfig(**m["config"])
    t = {name: read_tns(path.parent / f) for name, f in m["tensors"].items()}

    def norm(prefix):
        return Norm(t[f"{prefix}.gamma"], t[f"{prefix}.beta"])

    blocks = []
    for i, bm in enumerate(m["layout"]["blocks"]):
        mats = {k.split(".", 1)[1]: v for k, v in t.items() if k.startswith(f"block{i}.w")}
        blocks.append(BlockWeights(AttentionWeights(bm["variant"], heads=bm["heads"], **mats), norm(f"block{i}.norm")))
    post_mats = {k[len("post.attn."):]: v for k, v in t.items() if k.startswith("post.attn.")}
    post = PostAttentionWeights(
        attn=AttentionWeights("mhca", heads=m["layout"]["post_heads"], **post_mats),
        norm1=norm("post.norm1"),
        w1=t["post.w1"], b1=t["post.b1"], w2=t["post.w2"], b2=t["post.b2"],
        norm2=norm("post.norm2"),
    )
    weights = DecoderWeights(blocks, post, t["cls.w"], t["cls.b"], t.get("proposals"))
    return cfg, weights
