"""Single-threaded CPU latency of every module at the reference sizes, written as CSV."""

import argparse

from yosolab.bench import MODULES, run_bench, write_bench_csv
from yosolab.flops import REFERENCE_AGGREGATOR, REFERENCE_ATTENTION


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="bench_reference.csv")
    ap.add_argument("--warmup", type=int, default=1)
    ap.add_argument("--iters", type=int, default=5)
    ap.add_argument("--modules", default=",".join(MODULES))
    args = ap.parse_args()
    results = []
    for m in args.modules.split(","):
        r = run_bench(m, REFERENCE_AGGREGATOR, REFERENCE_ATTENTION, args.warmup, args.iters)
        print(f"{m:5s} median {r.median_ns / 1e6:10.3f} ms")
        results.append(r)
    write_bench_csv(results, args.out)
    med = {r.module: r.median_ns for r in results}
    if {"ifa", "cfa"} <= med.keys():
        print(f"CFA faster than IFA: {med['cfa'] < med['ifa']} ({med['ifa'] / med['cfa']:.2f}x)")
    if {"mhca", "sdca"} <= med.keys():
        print(f"SDCA faster than MHCA: {med['sdca'] < med['mhca']} ({med['mhca'] / med['sdca']:.2f}x)")


if __name__ == "__main__":
    main()
