"""Single-threaded wall-clock micro-benchmarks of the aggregators and attention variants."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import aggregator as agg
from . import decoder as dec
from .flops import AggregatorCostConfig, AttentionCostConfig, aggregator_inputs, attention_inputs
from .tensor import Rng, summation

MODULES = ("ifa", "cfa", "mhca", "dca", "sdca", "pdca", "ddca")
CSV_HEADER = [
    "module", "n", "d", "t", "c2", "c3", "c4", "c5", "h", "w",
    "iters", "min_ns", "median_ns", "mean_ns", "stddev_ns",
]


@dataclass
class BenchResult:
    module: str
    config: dict
    warmup: int
    iters: int
    times_ns: list[int] = field(default_factory=list)

    @property
    def min_ns(self) -> int:
        return min(self.times_ns)

    @property
    def max_ns(self) -> int:
        return max(self.times_ns)

    @property
    def median_ns(self) -> float:
        return statistics.median(self.times_ns)

    @property
    def mean_ns(self) -> float:
        return statistics.fmean(self.times_ns)

    @property
    def stddev_ns(self) -> float:
        return statistics.pstdev(self.times_ns)

    def row(self) -> list:
        c = self.config
        return [
            self.module, c["n"], c["d"], c["t"], c["c2"], c["c3"], c["c4"], c["c5"], c["h"], c["w"],
            self.iters, self.min_ns, f"{self.median_ns:.1f}", f"{self.mean_ns:.1f}", f"{self.stddev_ns:.1f}",
        ]


def _prepare(module: str, agg_cfg: AggregatorCostConfig, att_cfg: AttentionCostConfig, seed: int, dtype: str):
    rng = Rng(seed)
    if module in ("ifa", "cfa"):
        p, w = aggregator_inputs(agg_cfg, module, rng, dtype)
        fn = agg.aggregate_ifa if module == "ifa" else agg.aggregate_cfa
        return lambda: fn(p, w)
    q, v, w = attention_inputs(att_cfg, module, rng, dtype)
    return lambda: dec.attend(q, v, w)


def run_bench(
    module: str,
    agg_cfg: AggregatorCostConfig,
    att_cfg: AttentionCostConfig,
    warmup: int = 1,
    iters: int = 5,
    seed: int = 0,
    dtype: str = "f32",
    mode: str = "blas",
) -> BenchResult:
    """Time ``iters`` calls after ``warmup`` untimed ones, with BLAS pinned to one thread."""
    if module not in MODULES:
        raise ValueError(f"unknown module {module!r}")
    if iters < 1 or warmup < 0:
        raise ValueError("need iters >= 1 and warmup >= 0")
    call = _prepare(module, agg_cfg, att_cfg, seed, dtype)
    echo = {
        "n": att_cfg.n, "d": agg_cfg.d if module in ("ifa", "cfa") else att_cfg.d, "t": att_cfg.t,
        "c2": agg_cfg.c2, "c3": agg_cfg.c3, "c4": agg_cfg.c4, "c5": agg_cfg.c5, "h": agg_cfg.h, "w": agg_cfg.w,
    }
    result = BenchResult(module, echo, warmup, iters)
    with threadpool_limits(limits=1), summation(mode):
        for _ in range(warmup):
            call()
        for _ in range(iters):
            t0 = time.perf_counter_ns()
            call()
            result.times_ns.append(time.perf_counter_ns() - t0)
    return result


def write_bench_csv(results, path, append: bool = False) -> Path:
    path = Path(path)
    write_header = not (append and path.exists() and path.stat().st_size > 0)
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if write_header:
            writer.writerow(CSV_HEADER)
        for r in results:
            writer.writerow(r.row())
    return path
