#!/usr/bin/env python3
"""Plot df curve families or chicken-egg panels written by the dfcausal CLI.

    plot_curves.py out/curves_x.csv out/curves_z.csv -o curves.png
    plot_curves.py --panels out/panels.csv -o panels.png
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_family(ax, path: Path) -> None:
    df = pd.read_csv(path).dropna(subset=["sigma_est"])
    for n, g in df.groupby("n_constr"):
        ax.errorbar(g["sigma_w"], g["sigma_est"], yerr=g["stderr"], marker="o", ms=3,
                    capsize=2, label=f"N={n}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("window sigma_w")
    ax.set_ylabel("conditional spread")
    ax.set_title(path.stem)
    ax.legend(fontsize="small")


def plot_panels(path: Path, out: Path) -> None:
    df = pd.read_csv(path).dropna(subset=["sd_chicken", "sd_egg"], how="all")
    groups = list(df.groupby("constrained"))
    fig, axes = plt.subplots(1, len(groups) + 1, figsize=(5 * (len(groups) + 1), 4))
    for ax, (name, g) in zip(axes, groups):
        for col in ("chicken", "egg"):
            ax.errorbar(g["sigma_w"], g[f"sd_{col}"], yerr=g[f"se_{col}"], marker="o", ms=3,
                        capsize=2, label=f"sd {col}")
        ax.set_xscale("log")
        ax.set_xlabel("bin width")
        ax.set_title(f"{name} held near zero")
        ax.legend(fontsize="small")
    for name, g in groups:
        axes[-1].plot(g["sigma_w"], g["n_selected"], marker="o", ms=3, label=name)
    axes[-1].set_xscale("log")
    axes[-1].set_yscale("log")
    axes[-1].set_xlabel("bin width")
    axes[-1].set_ylabel("points in bin")
    axes[-1].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("files", nargs="*", type=Path, help="curve CSV files")
    ap.add_argument("--panels", type=Path, help="chicken-egg panels CSV")
    ap.add_argument("-o", "--output", type=Path, default=Path("curves.png"))
    args = ap.parse_args()

    if args.panels:
        plot_panels(args.panels, args.output)
        return
    if not args.files:
        ap.error("give at least one curve CSV or --panels")
    fig, axes = plt.subplots(1, len(args.files), figsize=(5 * len(args.files), 4), squeeze=False)
    for ax, path in zip(axes[0], args.files):
        plot_family(ax, path)
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)


if __name__ == "__main__":
    main()
