"""CSV + matplotlib figure emission for training runs and metric reports."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_figure(losses, path, title="training loss"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    losses = np.asarray(losses, dtype=float)
    ax.plot(losses, lw=0.8, alpha=0.5, label="raw")
    if len(losses) >= 10:
        k = max(1, len(losses) // 50)
        kernel = np.ones(k) / k
        smooth = np.convolve(losses, kernel, mode="valid")
        ax.plot(np.arange(k - 1, k - 1 + len(smooth)), smooth, lw=1.5,
                label=f"mean({k})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_metrics_report(values: dict, csv_path, fig_path=None,
                        distance_matrix=None):
    """Write metric,value rows; optionally a bar chart + distance heatmap."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in values.items():
            writer.writerow([name, f"{value:.8g}"])
    if fig_path is not None:
        ncols = 2 if distance_matrix is not None else 1
        fig, axes = plt.subplots(1, ncols, figsize=(4.5 * ncols, 3.5))
        axes = np.atleast_1d(axes)
        names = list(values)
        axes[0].bar(names, [values[n] for n in names], color="#4878d0")
        axes[0].set_title("set-to-set metrics")
        axes[0].tick_params(axis="x", rotation=20)
        for name, val in values.items():
            axes[0].bar_label(axes[0].containers[0], fmt="%.3g", fontsize=8)
            break
        if distance_matrix is not None:
            im = axes[1].imshow(distance_matrix, cmap="viridis",
                                aspect="auto")
            axes[1].set_title("pairwise distances (gen x ref)")
            axes[1].set_xlabel("reference")
            axes[1].set_ylabel("generated")
            fig.colorbar(im, ax=axes[1], fraction=0.046)
        fig.tight_layout()
        fig.savefig(fig_path, dpi=120)
        plt.close(fig)
    return csv_path


def save_strand_preview(world_strands, path, max_strands=400, title=None):
    """3D polyline preview of a hairstyle (subsampled for readability)."""
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    n = len(world_strands)
    step = max(1, n // max_strands)
    for s in world_strands[::step]:
        ax.plot(s[:, 0], s[:, 1], s[:, 2], lw=0.3, color="#3b3b6d", alpha=0.6)
    ax.set_box_aspect((1, 1, 1))
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
