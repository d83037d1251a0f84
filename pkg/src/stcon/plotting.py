"""Figure rendering for run artifacts.

Renders matplotlib PNGs next to the delimited trace output (single-run
panels and the two-graph stepsize comparison grid), and also emits a
gnuplot-compatible plot script that consumes the same CSV files, so the
figures can be regenerated outside Python.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GRAD_COLUMN = 2  # 0-based: k,phi,grad_norm_sq,consensus_sq,...
DIST_COLUMN = 3


def _load_csv(path):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data.reshape(1, -1)
    return data


def render_run_figure(csv_path, png_path, title: str = ""):
    """Two log-scale panels (gradient norm and consensus distance) for one run."""
    data = _load_csv(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, col, label in (
        (axes[0], GRAD_COLUMN, r"$\|\mathrm{grad}\|_F^2$"),
        (axes[1], DIST_COLUMN, r"$\frac{1}{N}\|x_k-\bar x_k\|_F^2$"),
    ):
        ax.semilogy(data[:, 0], np.maximum(data[:, col], 1e-300), lw=1.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        ax.grid(True, which="both", ls=":", lw=0.4)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)
    return png_path


def render_comparison_figure(groups, png_path):
    """Stepsize-comparison grid: one row per graph, gradient and distance
    columns, every run of the group overlaid.

    groups: list of (graph_label, [(run_label, csv_path), ...]).
    """
    rows = len(groups)
    fig, axes = plt.subplots(rows, 2, figsize=(11, 4 * rows), squeeze=False)
    for row, (graph_label, runs) in enumerate(groups):
        for col, (column, ylabel) in enumerate((
            (GRAD_COLUMN, r"$\|\mathrm{grad}\|_F^2$"),
            (DIST_COLUMN, r"$\frac{1}{N}\|x_k-\bar x_k\|_F^2$"),
        )):
            ax = axes[row][col]
            for run_label, csv_path in runs:
                data = _load_csv(csv_path)
                ax.semilogy(data[:, 0], np.maximum(data[:, column], 1e-300),
                            lw=1.1, label=run_label)
            ax.set_title(f"{graph_label}: " + ("gradient" if col == 0 else "distance"))
            ax.set_xlabel("iteration")
            ax.set_ylabel(ylabel)
            ax.grid(True, which="both", ls=":", lw=0.4)
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)
    return png_path


def gnuplot_script(groups, output_png: str = "comparison_gnuplot.png") -> str:
    """Plain-text gnuplot script reproducing the comparison grid from the CSVs.

    Paths are written relative to the script's directory; run with
    `gnuplot <script>`.
    """
    rows = len(groups)
    lines = [
        "# gnuplot script for the consensus comparison figure",
        "set datafile separator ','",
        "set logscale y",
        "set format y '%.0e'",
        "set grid",
        f"set terminal pngcairo size 1300,{420 * rows}",
        f"set output '{output_png}'",
        f"set multiplot layout {rows},2",
    ]
    for graph_label, runs in groups:
        for column, panel in ((GRAD_COLUMN + 1, "gradient"), (DIST_COLUMN + 1, "distance")):
            lines.append(f"set title '{graph_label}: {panel}'")
            plot_parts = [
                f"'{os.path.basename(csv)}' skip 1 using 1:{column} "
                f"with lines title '{label}'"
                for label, csv in runs
            ]
            lines.append("plot " + ", \\\n     ".join(plot_parts))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
