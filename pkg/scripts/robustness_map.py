"""Efficiency of Gaussian pulses over an (A, sigma) grid at fixed xi, with band labels.

The output CSV is a matrix (rows: A, columns: sigma) that can be fed
straight into a contour plot; a JSON file with the band legend and the
per-cell labels is written next to it.
"""
import argparse
import csv
import json
from pathlib import Path

from spinorder.dynamics import format_number
from spinorder.optimizer import band_legend, robustness_grid


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--xi", type=float, default=1.0)
    parser.add_argument("--step", type=float, default=0.01)
    parser.add_argument("--out", default="results/robustness.csv")
    args = parser.parse_args()

    grid = robustness_grid(args.xi, (0.5, 2.0, args.step), (0.5, 2.5, args.step))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["A\\sigma"] + [format_number(s) for s in grid.sigma_axis])
        for a, row in zip(grid.A_axis, grid.efficiency):
            writer.writerow([format_number(a)] + [format_number(v) for v in row])
    bands = out.with_suffix(".bands.json")
    bands.write_text(json.dumps({"xi": args.xi, "legend": band_legend(), "bands": grid.bands.tolist()}))

    a, s, best = grid.best
    print(f"wrote {out} and {bands}")
    print(f"best Gaussian: A={a:.3f} sigma={s:.3f} efficiency={best:.4f}")
    labels, counts = zip(*sorted({b: (grid.bands == b).sum() for b in set(grid.bands.ravel())}.items()))
    for label, count in zip(labels, counts):
        print(f"  {label:6s} {count / grid.bands.size:6.1%}")


if __name__ == "__main__":
    main()
