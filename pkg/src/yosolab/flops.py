"""Analytic FLOPs formulas, the instrumented counting oracle, and ratio contour grids.

Counting convention (shared by formulas and counter): one op per
multiply-accumulate, four per bilinear-interpolated output element, one per
accumulation add. Softmax, scaling, normalisation and bias adds are not part
of the modelled terms; the counting oracle runs bias-free modules.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import aggregator as agg
from . import decoder as dec
from .tensor import Rng, rand_uniform, summation, tallying

CONVENTION = "mac=1,interp_output=4,accum_add=1"


@dataclass(frozen=True)
class AggregatorCostConfig:
    c2: int
    c3: int
    c4: int
    c5: int
    d: int
    h: int
    w: int

    def __post_init__(self):
        if min(self.c2, self.c3, self.c4, self.c5, self.d, self.h, self.w) < 1:
            raise ValueError("aggregator cost config fields must be positive")

    @property
    def widths(self) -> tuple[int, int, int, int]:
        return (self.c2, self.c3, self.c4, self.c5)


@dataclass(frozen=True)
class AttentionCostConfig:
    n: int
    d: int
    t: int

    def __post_init__(self):
        if min(self.n, self.d, self.t) < 1:
            raise ValueError("attention cost config fields must be positive")


REFERENCE_AGGREGATOR = AggregatorCostConfig(c2=128, c3=256, c4=512, c5=1024, d=256, h=256, w=256)
REFERENCE_ATTENTION = AttentionCostConfig(n=100, d=256, t=3)


@dataclass
class FlopsReport:
    analytic: int
    counted: int | None = None
    convention: str = CONVENTION
    breakdown: dict[str, int] = field(default_factory=dict)


# --------------------------------------------------------------------------
# analytic formulas


def flops_ifa(cfg: AggregatorCostConfig) -> int:
    hw = cfg.h * cfg.w
    return 4 * (cfg.c5 + cfg.c4 + cfg.c3) * hw + (cfg.c5 + cfg.c4 + cfg.c3 + cfg.c2) * cfg.d * hw


def _cfa_exact(cfg: AggregatorCostConfig) -> Fraction:
    dhw = cfg.d * cfg.h * cfg.w
    conv = (Fraction(cfg.c5, 64) + Fraction(cfg.c4, 16) + Fraction(cfg.c3, 4) + cfg.c2) * dhw
    return conv + 12 * dhw + 3 * dhw


def flops_cfa(cfg: AggregatorCostConfig) -> int:
    total = _cfa_exact(cfg)
    if total.denominator != 1:
        raise ValueError(f"CFA cost {total} is not integral; h and w must be divisible by 8")
    return int(total)


def aggregator_ratio(cfg: AggregatorCostConfig) -> Fraction:
    """IFA/CFA FLOPs ratio as an exact rational."""
    return Fraction(flops_ifa(cfg)) / _cfa_exact(cfg)


def flops_attention(cfg: AttentionCostConfig, variant: str) -> int:
    n, d, t = cfg.n, cfg.d, cfg.t
    if variant == "mhca":
        return 4 * n * d * d + 2 * n * n * d
    if variant == "sdca":
        return 2 * n * d * t + 2 * n * n * d
    if variant == "dca":
        return 2 * n * d * n * t
    if variant == "pdca":
        return 2 * n * n * d
    if variant == "ddca":
        return 2 * n * d * t
    raise ValueError(f"unknown attention variant {variant!r}")


def sdca_reduction_ratio(cfg: AttentionCostConfig) -> Fraction:
    """MHCA/SDCA ratio in closed form, (2d + n) / (t + n)."""
    return Fraction(2 * cfg.d + cfg.n, cfg.t + cfg.n)


# --------------------------------------------------------------------------
# counting oracle


def counted_breakdown(fn, *args, **kwargs) -> dict[str, int]:
    with tallying() as t:
        fn(*args, **kwargs)
    return dict(t)


def counted_flops(fn, *args, **kwargs) -> int:
    """Total ops tallied while executing ``fn(*args, **kwargs)``."""
    return sum(counted_breakdown(fn, *args, **kwargs).values())


def aggregator_inputs(cfg: AggregatorCostConfig, form: str, rng: Rng, dtype="f32"):
    p = agg.PyramidFeatures.random(rng, cfg.widths, cfg.h, cfg.w, dtype)
    w = agg.AggregatorWeights.random_ifa(rng, cfg.widths, cfg.d, dtype)
    if form == "cfa":
        w = agg.reparameterize(w)
    return p, w


def attention_inputs(cfg: AttentionCostConfig, variant: str, rng: Rng, dtype="f32"):
    q = rand_uniform(rng, (cfg.n, cfg.d), -1.0, 1.0, dtype)
    v = rand_uniform(rng, (cfg.n, cfg.d), -1.0, 1.0, dtype)
    heads = dec.mhca_heads(cfg.d, cfg.t)
    w = dec.AttentionWeights.random(variant, rng, cfg.n, cfg.d, cfg.t, heads, dtype)
    return q, v, w


def report_aggregator(cfg: AggregatorCostConfig, form: str, counted: bool = True, seed: int = 0) -> FlopsReport:
    analytic = flops_ifa(cfg) if form == "ifa" else flops_cfa(cfg)
    rep = FlopsReport(analytic)
    if counted:
        p, w = aggregator_inputs(cfg, form, Rng(seed))
        fn = agg.aggregate_ifa if form == "ifa" else agg.aggregate_cfa
        with summation("blas"):
            rep.breakdown = counted_breakdown(fn, p, w)
        rep.counted = sum(rep.breakdown.values())
    return rep


def report_attention(cfg: AttentionCostConfig, variant: str, counted: bool = True, seed: int = 0) -> FlopsReport:
    rep = FlopsReport(flops_attention(cfg, variant))
    if counted:
        q, v, w = attention_inputs(cfg, variant, Rng(seed))
        with summation("blas"):
            rep.breakdown = counted_breakdown(dec.attend, q, v, w)
        rep.counted = sum(rep.breakdown.values())
    return rep


# --------------------------------------------------------------------------
# contour grids


def axis_values(lo: int, hi: int, steps: int) -> list[int]:
    if lo < 1 or hi < lo or steps < 1:
        raise ValueError(f"invalid axis range {lo}:{hi}:{steps}")
    if steps == 1:
        return [int(lo)]
    vals = sorted({int(round(v)) for v in np.linspace(lo, hi, steps)})
    if len(vals) != steps:
        raise ValueError(f"{steps} steps do not fit in integer range {lo}..{hi}")
    return vals


def contour_grid(which: str, x_range, y_range, t: int = 3) -> list[tuple[int, int, Fraction]]:
    """Reduction ratios over a grid.

    ``which="cfa"``: x = shared channel width c (c2=c3=c4=c5), y = output width d.
    ``which="sdca"``: x = tokens n, y = hidden d, with fixed kernel size t.
    Ranges are ``(lo, hi, steps)`` triples.
    """
    xs = axis_values(*x_range)
    ys = axis_values(*y_range)
    rows = []
    for y in ys:
        for x in xs:
            if which == "cfa":
                # ratio is independent of h, w; 8x8 keeps the CFA count integral
                r = aggregator_ratio(AggregatorCostConfig(x, x, x, x, y, 8, 8))
            elif which == "sdca":
                r = sdca_reduction_ratio(AttentionCostConfig(x, y, t))
            else:
                raise ValueError(f"unknown contour kind {which!r}")
            rows.append((x, y, r))
    return rows


def write_contour_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "ratio"])
        for x, y, r in rows:
            writer.writerow([x, y, f"{float(r):.6f}"])
    return path
