"""Figure rendering for the command-line report paths.

Every plot lands next to its delimited counterpart (CSV/JSON); the library
modules stay figure-free and emit plot-ready data only.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import LABELS


def correlation_heatmap(matrix: np.ndarray, path, title: str = "label correlations") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 5.6))
    image = ax.imshow(matrix, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(LABELS)), LABELS, rotation=45, ha="right")
    ax.set_yticks(range(len(LABELS)), LABELS)
    for i in range(len(LABELS)):
        for j in range(len(LABELS)):
            ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center", fontsize=7)
    ax.set_title(title)
    fig.colorbar(image, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def training_curves(history_rows: list[dict], path) -> None:
    epochs = [row["epoch"] for row in history_rows]
    losses = [row["train_loss"] for row in history_rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, losses, marker="o", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("train loss")
    dev = [row.get("dev_f1") for row in history_rows]
    if any(v is not None for v in dev):
        twin = ax.twinx()
        twin.plot(epochs, dev, marker="s", color="tab:green", label="dev micro-F1")
        twin.set_ylabel("dev micro-F1")
        twin.legend(loc="lower right")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_curve(grid: list[float], f1_values: list[float], best: float, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(grid, f1_values, marker="o")
    ax.axvline(best, color="tab:red", linestyle="--", label=f"best = {best:g}")
    ax.set_xlabel("decision threshold")
    ax.set_ylabel("micro-F1")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def permutation_histogram(null_statistics: np.ndarray, observed: float, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.hist(null_statistics, bins=60, color="tab:blue", alpha=0.8)
    ax.axvline(observed, color="tab:red", linestyle="--", label=f"observed = {observed:.4f}")
    ax.axvline(-observed, color="tab:red", linestyle=":", alpha=0.6)
    ax.set_xlabel("permuted micro-F1 difference")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
