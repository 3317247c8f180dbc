"""Write 20x20 FLOPs-reduction contour grids for CFA and SDCA as CSV."""

import argparse
from pathlib import Path

from yosolab.flops import contour_grid, write_contour_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--t", type=int, default=3)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfa = contour_grid("cfa", (64, 1024, args.steps), (64, 1024, args.steps))
    sdca = contour_grid("sdca", (50, 500, args.steps), (64, 1024, args.steps), t=args.t)
    write_contour_csv(cfa, out / "contour_cfa.csv")
    write_contour_csv(sdca, out / "contour_sdca.csv")
    for name, rows in (("cfa (x=c, y=d)", cfa), ("sdca (x=n, y=d)", sdca)):
        ratios = [float(r) for _, _, r in rows]
        print(f"{name}: {len(rows)} cells, ratio range {min(ratios):.3f} .. {max(ratios):.3f}")


if __name__ == "__main__":
    main()
