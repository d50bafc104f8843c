"""Render a heatmap CSV written by `isn heatmap` as truth-vs-prediction 2D histograms."""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("out")
    ap.add_argument("--bins", type=int, default=80)
    args = ap.parse_args()

    data = np.genfromtxt(args.csv, delimiter=",", names=True)
    comps = np.unique(data["component"]).astype(int)
    fig, axes = plt.subplots(1, len(comps), figsize=(4.2 * len(comps), 4), squeeze=False)
    for ax, c in zip(axes[0], comps):
        sel = data[data["component"] == c]
        t, p = sel["truth"], sel["prediction"]
        lo, hi = np.percentile(np.concatenate([t, p]), [0.5, 99.5])
        ax.hist2d(t, p, bins=args.bins, range=[[lo, hi], [lo, hi]], cmap="viridis", cmin=1)
        ax.plot([lo, hi], [lo, hi], "r--", lw=0.8)
        ax.set_xlabel(f"true {c}")
        ax.set_ylabel(f"predicted {c}")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
