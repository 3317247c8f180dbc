"""Command-line entry point: ``yosolab {verify,bench,flops,eval-pq,demo}``.

Exit codes: 0 success, 1 check failure, 2 usage or config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import aggregator as agg
from . import bench
from . import decoder as dec
from . import flops as fl
from . import panoptic as pan
from . import verify
from .config import ConfigError, RunConfig, Tolerances, load_config, resolve_seed
from .tensor import Rng, ShapeError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


# --------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in verify.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from all, {', '.join(verify.SUITES)}")
    seed = resolve_seed(args.seed)
    tol = Tolerances()
    if args.tol is not None:
        # one override scales every floating tolerance
        tol = Tolerances(*(args.tol for _ in range(len(tol.__dataclass_fields__))))
    checks = verify.run_suites(args.suite, seed, tol)
    passed = all(c.passed for c in checks)
    if args.json:
        doc = {"suite": args.suite, "seed": seed, "passed": passed, "checks": [c.to_dict() for c in checks]}
        print(json.dumps(doc, indent=2))
    else:
        for c in checks:
            flag = "PASS" if c.passed else "FAIL"
            print(f"{flag}  [{c.suite}] {c.name}  max_err={c.max_error:.3e}  n={c.instances}")
        print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return EXIT_OK if passed else EXIT_FAIL


# --------------------------------------------------------------------------
# bench


def _modules(text: str) -> list[str]:
    mods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in mods if m not in bench.MODULES]
    if not mods or bad:
        raise UsageError(f"unknown module(s) {bad or text!r}; choose from {', '.join(bench.MODULES)}")
    return mods


def cmd_bench(args) -> int:
    mods = _modules(args.module)
    if args.iters < 1 or args.warmup < 0:
        raise UsageError("--iters must be >= 1 and --warmup >= 0")
    cfg = _config(args.config)
    seed = resolve_seed(args.seed, cfg.seed)
    results = []
    for m in mods:
        r = bench.run_bench(m, cfg.aggregator, cfg.attention_cost, args.warmup, args.iters, seed, cfg.dtype)
        print(f"{m:5s} median {r.median_ns / 1e6:10.3f} ms  (min {r.min_ns / 1e6:.3f}, iters {r.iters})")
        results.append(r)
    if args.out:
        bench.write_bench_csv(results, args.out, append=args.append)
    return EXIT_OK


# --------------------------------------------------------------------------
# flops


def _axis(text: str) -> tuple[int, int, int]:
    try:
        lo, hi, steps = (int(p) for p in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"bad axis range {text!r}; expected lo:hi:steps") from exc
    try:
        fl.axis_values(lo, hi, steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return lo, hi, steps


def cmd_flops(args) -> int:
    cfg = _config(args.config)
    if args.grid:
        if args.grid not in ("cfa", "sdca") or not (args.x and args.y):
            raise UsageError("--grid takes cfa or sdca together with --x lo:hi:n and --y lo:hi:n")
        rows = fl.contour_grid(args.grid, _axis(args.x), _axis(args.y), t=cfg.decoder.t)
        if args.out:
            fl.write_contour_csv(rows, args.out)
        else:
            writer = csv.writer(sys.stdout, lineterminator="\n")
            writer.writerow(["x", "y", "ratio"])
            writer.writerows([x, y, f"{float(r):.6f}"] for x, y, r in rows)
        return EXIT_OK

    rows = []
    for form in ("ifa", "cfa"):
        rep = fl.report_aggregator(cfg.aggregator, form, counted=args.counted, seed=cfg.seed)
        rows.append((form, rep))
    for variant in dec.VARIANTS:
        rep = fl.report_attention(cfg.attention_cost, variant, counted=args.counted, seed=cfg.seed)
        rows.append((variant, rep))
    header = ["module", "analytic", "counted"]
    table = [[m, r.analytic, "" if r.counted is None else r.counted] for m, r in rows]
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(table)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(table)
    mismatched = [m for m, r in rows if r.counted is not None and r.counted != r.analytic]
    if mismatched:
        print(f"counted != analytic for {mismatched}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------
# eval-pq


def cmd_eval_pq(args) -> int:
    try:
        pred, pred_classes = pan.read_seg(args.pred)
        gt, classes = pan.read_seg(args.gt)
    except pan.SegFormatError as exc:
        raise UsageError(str(exc)) from exc
    if pred.shape != gt.shape:
        raise UsageError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred_classes != classes:
        raise UsageError("pred and gt carry different class tables")
    report = pan.pq_evaluate(pred, gt, classes)
    doc = report.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    s = report.summary()
    print(f"PQ {s['pq']:.6f}  SQ {s['sq']:.6f}  RQ {s['rq']:.6f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# demo


def run_demo(cfg: RunConfig, out_path, pyramid_path=None, seed: int | None = None, log=print) -> pan.PanopticMap:
    """Random-weight forward pass: IFA weights, re-parameterise, CFA, decode, merge, write.

    Raises AssertionError when the re-parameterised aggregator disagrees with
    the fused one beyond the configured tolerance.
    """
    seed = cfg.seed if seed is None else seed
    rng = Rng(seed)
    timings = {}

    t0 = time.perf_counter()
    if pyramid_path:
        pyramid = agg.load_pyramid(pyramid_path)
    else:
        a = cfg.aggregator
        pyramid = agg.PyramidFeatures.random(rng, a.widths, a.h, a.w, cfg.dtype)
    d = cfg.decoder.d
    ifa_w = agg.AggregatorWeights.random_ifa(rng, pyramid.widths, d, cfg.dtype, bias=True)
    dec_w = dec.DecoderWeights.random(cfg.decoder, rng, cfg.dtype)
    timings["setup"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cfa_w = agg.reparameterize(ifa_w)
    s_ifa = agg.aggregate_ifa(pyramid, ifa_w)
    s = agg.aggregate_cfa(pyramid, cfa_w)
    err = float(np.max(np.abs(s_ifa.astype(np.float64) - s.astype(np.float64))))
    bound = cfg.tolerances.ifa_cfa_f32 if cfg.dtype == "f32" else cfg.tolerances.ifa_cfa_f64
    if not err <= bound:
        raise AssertionError(f"re-parameterisation check failed: max|IFA-CFA| = {err:.3e} > {bound:g}")
    timings["aggregate"] = time.perf_counter() - t0
    log(f"re-parameterisation check: max|IFA-CFA| = {err:.3e} <= {bound:g}")

    t0 = time.perf_counter()
    out = dec.decode(s, None, cfg.decoder, dec_w)
    timings["decode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    classes = pan.ClassTable(cfg.decoder.classes, frozenset(cfg.panoptic.stuff))
    seg = pan.merge_output(out, classes, cfg.panoptic.threshold)
    seg.check_partition(classes)
    pan.write_seg(out_path, seg, classes)
    timings["merge+write"] = time.perf_counter() - t0

    for stage, sec in timings.items():
        log(f"{stage:12s} {sec * 1e3:9.2f} ms")
    log(f"segments: {len(seg.segments())}  void pixels: {int((seg.class_ids == pan.VOID).sum())}")
    return seg


def cmd_demo(args) -> int:
    cfg = _config(args.config)
    if cfg.aggregator.d != cfg.decoder.d:
        raise ConfigError(f"aggregator d={cfg.aggregator.d} and decoder d={cfg.decoder.d} must match")
    seed = resolve_seed(args.seed, cfg.seed)
    try:
        run_demo(cfg, args.out, args.pyramid, seed)
    except AssertionError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="yosolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    v = sub.add_parser("verify", help="run seeded property suites")
    v.add_argument("--suite", default="all")
    v.add_argument("--seed", type=int)
    v.add_argument("--tol", type=float, help="override every floating tolerance")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="single-threaded wall-clock benchmarks")
    b.add_argument("--module", required=True, help="comma list of " + ",".join(bench.MODULES))
    b.add_argument("--config")
    b.add_argument("--seed", type=int)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--iters", type=int, default=5)
    b.add_argument("--out")
    b.add_argument("--append", action="store_true")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("flops", help="analytic and counted operation counts, or contour grids")
    f.add_argument("--config")
    f.add_argument("--counted", action="store_true")
    f.add_argument("--grid", help="cfa or sdca")
    f.add_argument("--x", help="lo:hi:steps")
    f.add_argument("--y", help="lo:hi:steps")
    f.add_argument("--out")
    f.set_defaults(func=cmd_flops)

    e = sub.add_parser("eval-pq", help="panoptic quality of a .seg prediction against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval_pq)

    d = sub.add_parser("demo", help="random-weight end-to-end forward pass")
    d.add_argument("--config")
    d.add_argument("--pyramid", help="pyramid.json fixture")
    d.add_argument("--seed", type=int)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a command is required")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
