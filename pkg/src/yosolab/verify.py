"""Seeded property suites behind ``yosolab verify``.

Each check yields a :class:`Check` with a pass flag and the largest error it
observed (0.0 for exact checks that held).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import aggregator as agg
from . import decoder as dec
from . import flops as fl
from . import kernels as kn
from . import oracles as orc
from . import panoptic as pan
from .config import Tolerances
from .tensor import Rng, rand_uniform, softmax_rows

SUITES = ("aggregator", "decoder", "flops", "panoptic")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    max_error: float
    instances: int

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "passed": self.passed,
            "max_error": self.max_error,
            "instances": self.instances,
        }


def _ri(rng: Rng, lo: int, hi: int) -> int:
    """Random integer in [lo, hi]."""
    return int(rng.integers(lo, hi + 1, 1)[0])


# --------------------------------------------------------------------------
# aggregator


def random_pyramid_case(rng: Rng, dtype: str, large: bool = False):
    if large:
        widths = (128, 256, 512, 1024)
        d = 256 if _ri(rng, 0, 1) else 4
        h = w = 8
    else:
        widths = tuple(_ri(rng, 1, 16) for _ in range(4))
        d = _ri(rng, 1, 8)
        h, w = 8 * _ri(rng, 1, 3), 8 * _ri(rng, 1, 3)
    p = agg.PyramidFeatures.random(rng, widths, h, w, dtype)
    weights = agg.AggregatorWeights.random_ifa(rng, widths, d, dtype)
    return p, weights


def ifa_cfa_error(p, w) -> float:
    a = agg.aggregate_ifa(p, w)
    b = agg.aggregate_cfa(p, agg.reparameterize(w))
    return float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def suite_aggregator(seed: int, tol: Tolerances, instances: int = 100) -> list[Check]:
    checks = []
    for dtype, bound in (("f32", tol.ifa_cfa_f32), ("f64", tol.ifa_cfa_f64)):
        rng = Rng(seed)
        worst = 0.0
        for i in range(instances):
            p, w = random_pyramid_case(rng, dtype, large=(i % 10 == 0))
            worst = max(worst, ifa_cfa_error(p, w))
        checks.append(Check("aggregator", f"IFA≡CFA max|Δ| ≤ {bound:g} ({dtype})", worst <= bound, worst, instances))

    rng = Rng(seed + 1)
    ok = True
    for _ in range(instances):
        p, w = random_pyramid_case(rng, "f64")
        back = agg.fuse(agg.reparameterize(w))
        ok &= np.array_equal(back.kernels[0], w.kernels[0])
    checks.append(Check("aggregator", "reparameterize round trip bit-exact", bool(ok), 0.0, instances))

    rng = Rng(seed + 2)
    worst = {"f32": 0.0, "f64": 0.0}
    for i in range(instances):
        dtype = "f32" if i % 2 else "f64"
        c, h, w = _ri(rng, 1, 4), _ri(rng, 1, 6), _ri(rng, 1, 6)
        oh, ow = _ri(rng, 1, 12), _ri(rng, 1, 12)
        u = rand_uniform(rng, (c, h, w), dtype=dtype)
        v = rand_uniform(rng, (c, h, w), dtype=dtype)
        a, b = rand_uniform(rng, 2, dtype=dtype)
        lhs = kn.bilinear_resize(a * u + b * v, oh, ow)
        rhs = a * kn.bilinear_resize(u, oh, ow) + b * kn.bilinear_resize(v, oh, ow)
        worst[dtype] = max(worst[dtype], float(np.max(np.abs(lhs - rhs))))
    for dtype, bound in (("f32", tol.ifa_cfa_f32), ("f64", tol.ifa_cfa_f64)):
        checks.append(Check("aggregator", f"bilinear linearity ≤ {bound:g} ({dtype})", worst[dtype] <= bound, worst[dtype], instances // 2))
    return checks


# --------------------------------------------------------------------------
# decoder


def suite_decoder(seed: int, tol: Tolerances, instances: int = 100) -> list[Check]:
    rng = Rng(seed)
    exact = {"dyconv1d == literal double-sum loop": True, "depthwise == full embedding": True,
             "pointwise == matmul": True, "pre_attention == matmul composition": True,
             "sdca == dca on separable embedding": True}
    mhca_err = 0.0
    for i in range(instances):
        dtype = "f32" if i % 2 else "f64"
        n, d, t = _ri(rng, 1, 4), _ri(rng, 1, 6), 2 * _ri(rng, 0, 2) + 1
        v = rand_uniform(rng, (n, d), dtype=dtype)
        k = rand_uniform(rng, (n, n, t), dtype=dtype)
        exact["dyconv1d == literal double-sum loop"] &= np.array_equal(kn.dyconv1d(v, k), orc.dyconv1d_loop(v, k))
        kd = rand_uniform(rng, (n, 1, t), dtype=dtype)
        exact["depthwise == full embedding"] &= np.array_equal(
            kn.dyconv1d_depthwise(v, kd), kn.dyconv1d(v, orc.depthwise_as_full(kd))
        )
        kp = rand_uniform(rng, (n, n, 1), dtype=dtype)
        exact["pointwise == matmul"] &= np.array_equal(
            kn.dyconv1d_pointwise(v, kp), orc.matmul_loop(np.ascontiguousarray(kp[:, :, 0]), v)
        )
        # small integers keep every product and partial sum exact
        vi = rng.integers(-3, 4, n * d).reshape(n, d).astype(np.float64)
        kdi = rng.integers(-3, 4, n * t).reshape(n, 1, t).astype(np.float64)
        kpi = rng.integers(-3, 4, n * n).reshape(n, n, 1).astype(np.float64)
        exact["sdca == dca on separable embedding"] &= np.array_equal(
            kn.dyconv1d_pointwise(kn.dyconv1d_depthwise(vi, kdi), kpi),
            kn.dyconv1d(vi, orc.separable_as_full(kdi, kpi)),
        )
        s = rand_uniform(rng, (d, _ri(rng, 1, 4), _ri(rng, 1, 4)), dtype=dtype)
        q = rand_uniform(rng, (n, d), dtype=dtype)
        exact["pre_attention == matmul composition"] &= np.array_equal(
            dec.pre_attention(s, q), orc.pre_attention_matmuls(s, q)
        )
        heads = _ri(rng, 1, 3)
        dm = heads * _ri(rng, 1, 3)
        qm = rand_uniform(rng, (n, dm))
        vm = rand_uniform(rng, (n, dm))
        w = dec.AttentionWeights.random("mhca", rng, n, dm, 3, heads)
        ref = orc.mhca_per_head(qm, vm, w.wq, w.wk, w.wv, w.wo, heads)
        mhca_err = max(mhca_err, float(np.max(np.abs(dec.mhca(qm, vm, w) - ref))))
    checks = [Check("decoder", f"{name} (exact)", bool(ok), 0.0, instances) for name, ok in exact.items()]
    checks.append(Check("decoder", f"mhca == per-head oracle ≤ {tol.mhca:g}", mhca_err <= tol.mhca, mhca_err, instances))

    cfg = dec.DecoderConfig(n=6, d=8, t=3, blocks=2, stages=2, heads=2, ffn=16, classes=5)
    weights = dec.DecoderWeights.random(cfg, Rng(seed + 3))
    s = rand_uniform(Rng(seed + 4), (8, 8, 8))
    out1 = dec.decode(s, None, cfg, weights)
    out2 = dec.decode(s, None, cfg, weights)
    row_err = float(np.max(np.abs(out1.class_probs.sum(axis=1) - 1.0)))
    checks.append(Check("decoder", f"class_probs rows sum to 1 ≤ {tol.softmax:g}", row_err <= tol.softmax, row_err, 1))
    checks.append(Check("decoder", "binary masks in {0,1}", bool(np.isin(out1.binary, (0, 1)).all()), 0.0, 1))
    same = np.array_equal(out1.masks, out2.masks) and np.array_equal(out1.class_probs, out2.class_probs)
    checks.append(Check("decoder", "decode deterministic (bit-identical)", bool(same), 0.0, 2))
    return checks


# --------------------------------------------------------------------------
# flops


def suite_flops(seed: int, tol: Tolerances, instances: int = 50) -> list[Check]:
    rng = Rng(seed)
    mismatches = 0
    for _ in range(instances):
        cfg = fl.AggregatorCostConfig(
            *(_ri(rng, 1, 24) for _ in range(4)), d=_ri(rng, 1, 12), h=8 * _ri(rng, 1, 3), w=8 * _ri(rng, 1, 3)
        )
        for form in ("ifa", "cfa"):
            rep = fl.report_aggregator(cfg, form, seed=_ri(rng, 0, 10**6))
            mismatches += rep.counted != rep.analytic
        d = _ri(rng, 1, 12)
        t = 2 * _ri(rng, 0, 3) + 1
        acfg = fl.AttentionCostConfig(_ri(rng, 1, 12), d, t)
        for variant in dec.VARIANTS:
            rep = fl.report_attention(acfg, variant, seed=_ri(rng, 0, 10**6))
            mismatches += rep.counted != rep.analytic
    checks = [Check("flops", "counted == analytic (exact)", mismatches == 0, float(mismatches), instances * 7)]

    ok = True
    for _ in range(instances):
        c = fl.AttentionCostConfig(_ri(rng, 1, 500), _ri(rng, 1, 1024), _ri(rng, 1, 9))
        ok &= Fraction(fl.flops_attention(c, "mhca"), fl.flops_attention(c, "sdca")) == fl.sdca_reduction_ratio(c)
    checks.append(Check("flops", "MHCA/SDCA == (2d+n)/(t+n) (exact rational)", bool(ok), 0.0, instances))

    reference = {"mhca": 31_334_400, "dca": 15_360_000, "sdca": 5_273_600}
    ok = all(fl.flops_attention(fl.REFERENCE_ATTENTION, v) == x for v, x in reference.items())
    checks.append(Check("flops", "reference attention counts at n=100, d=256, t=3", ok, 0.0, 3))
    ratio = float(fl.aggregator_ratio(fl.REFERENCE_AGGREGATOR))
    rel = abs(ratio - 16.6 / 2.1) / (16.6 / 2.1)
    checks.append(Check("flops", "reference IFA/CFA ratio within 5% of 16.6/2.1", rel <= 0.05, rel, 1))

    violations = contour_violations()
    checks.append(Check("flops", "contour monotonicity (20x20)", violations == 0, float(violations), 800))
    return checks


def contour_violations(steps: int = 20) -> int:
    bad = 0
    cfa = {(x, y): r for x, y, r in fl.contour_grid("cfa", (64, 1024, steps), (64, 1024, steps))}
    sdca = {(x, y): r for x, y, r in fl.contour_grid("sdca", (50, 500, steps), (64, 1024, steps))}
    cs = sorted({x for x, _ in cfa})
    ds = sorted({y for _, y in cfa})
    for y in ds:
        for a, b in zip(cs, cs[1:]):
            bad += cfa[(b, y)] < cfa[(a, y)]
    for x in cs:
        for a, b in zip(ds, ds[1:]):
            bad += cfa[(x, b)] > cfa[(x, a)]
    ns = sorted({x for x, _ in sdca})
    dd = sorted({y for _, y in sdca})
    for y in dd:
        for a, b in zip(ns, ns[1:]):
            bad += not sdca[(b, y)] < sdca[(a, y)]
    for x in ns:
        for a, b in zip(dd, dd[1:]):
            bad += not sdca[(x, b)] > sdca[(x, a)]
    bad += sum(r <= 1 for r in list(cfa.values()) + list(sdca.values()))
    return bad


# --------------------------------------------------------------------------
# panoptic


def random_map(rng: Rng, h: int, w: int, classes: pan.ClassTable, segments: int = 4) -> pan.PanopticMap:
    """Random partition: pixels draw a segment label; segments draw a class."""
    labels = rng.integers(0, segments + 1, h * w).reshape(h, w)  # 0 -> void
    seg_cls = rng.integers(0, classes.num_classes, segments)
    cls = np.full((h, w), pan.VOID, np.uint32)
    inst = np.zeros((h, w), np.uint32)
    next_id = 1
    for s in range(1, segments + 1):
        region = labels == s
        if not region.any():
            continue
        c = int(seg_cls[s - 1])
        cls[region] = c
        if classes.is_thing(c):
            inst[region] = next_id
            next_id += 1
    return pan.PanopticMap(cls, inst)


def relabel_things(m: pan.PanopticMap, rng: Rng) -> pan.PanopticMap:
    ids = np.unique(m.instance_ids[m.instance_ids > 0])
    perm = ids[np.argsort(rng.uniform01(ids.size))] if ids.size else ids
    mapping = dict(zip(ids.tolist(), perm.tolist()))
    new = m.instance_ids.copy()
    for old, nw in mapping.items():
        new[m.instance_ids == old] = nw
    return pan.PanopticMap(m.class_ids.copy(), new)


def overlap_fixture() -> tuple[pan.PanopticMap, pan.PanopticMap, pan.ClassTable]:
    """4x5 maps where both segments overlap their counterpart on 8 of 12 union pixels."""
    classes = pan.ClassTable(2, frozenset({1}))
    gt_cls = np.ones((4, 5), np.uint32)
    gt_cls[:2, :] = 0  # class 0 (thing) on the top 10 pixels
    gt_inst = np.where(gt_cls == 0, 1, 0).astype(np.uint32)
    pr_cls = gt_cls.copy()
    pr_cls[1, 3:] = 1  # two thing pixels lost to stuff
    pr_cls[2, :2] = 0  # two stuff pixels gained by the thing
    pr_inst = np.where(pr_cls == 0, 1, 0).astype(np.uint32)
    return pan.PanopticMap(pr_cls, pr_inst), pan.PanopticMap(gt_cls, gt_inst), classes


def suite_panoptic(seed: int, tol: Tolerances, instances: int = 200) -> list[Check]:
    rng = Rng(seed)
    bad = 0
    for i in range(instances):
        n, m = _ri(rng, 1, 7), _ri(rng, 1, 7)
        if i % 4 == 0:
            cost = rng.integers(0, 4, n * m).reshape(n, m).astype(np.float64)
        else:
            cost = rng.uniform01(n * m).reshape(n, m)
        _, total = pan.hungarian(cost)
        _, brute = pan.brute_force_assignment(cost)
        bad += total != brute
    checks = [Check("panoptic", "hungarian == brute force (exact)", bad == 0, float(bad), instances)]

    classes = pan.ClassTable(4, frozenset({2, 3}))
    ident_ok, factor_err, relabel_ok = True, 0.0, True
    for _ in range(instances // 4):
        gt = random_map(rng, 6, 6, classes)
        pred = random_map(rng, 6, 6, classes) if _ri(rng, 0, 1) else gt
        r_self = pan.pq_evaluate(gt, gt, classes)
        ident_ok &= all(c.pq == c.sq == c.rq == 1.0 for c in r_self.per_class.values() if c.present)
        rep = pan.pq_evaluate(pred, gt, classes)
        for c in rep.per_class.values():
            if c.rq > 0:
                factor_err = max(factor_err, abs(c.pq - c.sq * c.rq))
        relabeled = pan.pq_evaluate(relabel_things(pred, rng), relabel_things(gt, rng), classes)
        relabel_ok &= relabeled.to_dict() == rep.to_dict()
    checks.append(Check("panoptic", "PQ=SQ=RQ=1 on identical maps", bool(ident_ok), 0.0, instances // 4))
    checks.append(Check("panoptic", "PQ = SQ·RQ ≤ 1e-9", factor_err <= 1e-9, factor_err, instances // 4))
    checks.append(Check("panoptic", "instance relabel invariance (exact)", bool(relabel_ok), 0.0, instances // 4))

    pred, gt, fx_classes = overlap_fixture()
    pq = pan.pq_evaluate(pred, gt, fx_classes).pq
    err = abs(pq - 2 / 3)
    checks.append(Check("panoptic", "8-of-12 overlap fixture PQ = 0.666667", err <= 1e-6, err, 1))

    part_ok = True
    for _ in range(instances // 4):
        n, l = _ri(rng, 1, 6), 4
        probs = softmax_rows(rand_uniform(rng, (n, l), -3, 3))
        masks = rng.integers(0, 2, n * 36).reshape(n, 6, 6).astype(np.uint8)
        merged = pan.merge(probs, masks, classes, threshold=0.3)
        try:
            merged.check_partition(classes)
        except ValueError:
            part_ok = False
        perm = np.argsort(rng.uniform01(n))
        merged_p = pan.merge(probs[perm], masks[perm], classes, threshold=0.3)
        # permutation can only change ties; compare on tie-free inputs
        scores = probs.max(axis=1)
        if np.unique(scores).size == n:
            same = pan.pq_evaluate(merged_p, merged, classes)
            part_ok &= all(c.pq == 1.0 for c in same.per_class.values() if c.present)
    checks.append(Check("panoptic", "merge yields a partition, permutation-invariant", bool(part_ok), 0.0, instances // 4))
    return checks


RUNNERS = {
    "aggregator": suite_aggregator,
    "decoder": suite_decoder,
    "flops": suite_flops,
    "panoptic": suite_panoptic,
}


def run_suites(suite: str, seed: int, tol: Tolerances | None = None) -> list[Check]:
    tol = tol or Tolerances()
    names = SUITES if suite == "all" else (suite,)
    if any(name not in RUNNERS for name in names):
        raise ValueError(f"unknown suite {suite!r}")
    out = []
    for name in names:
        out.extend(RUNNERS[name](seed, tol))
    return out
