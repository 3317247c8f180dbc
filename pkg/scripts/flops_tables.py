"""Analytic and counted op totals at the reference aggregator and attention sizes."""

import argparse

from yosolab.decoder import VARIANTS
from yosolab.flops import (
    REFERENCE_AGGREGATOR,
    REFERENCE_ATTENTION,
    aggregator_ratio,
    report_aggregator,
    report_attention,
    sdca_reduction_ratio,
)

REPORTED_ATTENTION = {"mhca": 31.5e6, "dca": 15.5e6, "sdca": 5.4e6, "pdca": 5.2e6, "ddca": 0.3e6}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counted", action="store_true", help="also run the instrumented modules (a few seconds)")
    args = ap.parse_args()

    print(f"aggregator {REFERENCE_AGGREGATOR}")
    for form in ("ifa", "cfa"):
        rep = report_aggregator(REFERENCE_AGGREGATOR, form, counted=args.counted)
        print(f"  {form:4s} analytic {rep.analytic:>15,}  counted {rep.counted if rep.counted is not None else '-':>15}")
    r = aggregator_ratio(REFERENCE_AGGREGATOR)
    print(f"  ratio {r} = {float(r):.4f} (reported 16.6/2.1 = {16.6 / 2.1:.4f})")

    print(f"attention {REFERENCE_ATTENTION}")
    for v in VARIANTS:
        rep = report_attention(REFERENCE_ATTENTION, v, counted=args.counted)
        rel = (rep.analytic - REPORTED_ATTENTION[v]) / REPORTED_ATTENTION[v]
        counted = rep.counted if rep.counted is not None else "-"
        print(f"  {v:4s} analytic {rep.analytic:>12,}  counted {counted:>12}  vs reported {rel:+.1%}")
    s = sdca_reduction_ratio(REFERENCE_ATTENTION)
    print(f"  MHCA/SDCA = {s} = {float(s):.4f}")


if __name__ == "__main__":
    main()
