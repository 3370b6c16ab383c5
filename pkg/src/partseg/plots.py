"""File-based figure rendering for experiment reports.

Everything draws straight to PNG via the Agg backend; no interactive
display is ever opened.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# background, blood pool, ring, lower chamber
CLASS_COLORS = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.86, 0.25, 0.22],
        [0.30, 0.75, 0.32],
        [0.25, 0.45, 0.95],
    ]
)


def labels_to_rgb(labels: np.ndarray) -> np.ndarray:
    idx = np.clip(labels.astype(int), 0, len(CLASS_COLORS) - 1)
    return CLASS_COLORS[idx]


def overlay(image: np.ndarray, labels: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    base = np.repeat(image[..., None], 3, axis=-1)
    color = labels_to_rgb(labels)
    mask = (labels > 0)[..., None]
    return np.where(mask, (1 - alpha) * base + alpha * color, base)


def save_heatmap(matrix: np.ndarray, domains: Sequence[str], path: str | Path, title: str = "Cross-domain Dice") -> Path:
    fig, ax = plt.subplots(figsize=(1.4 + 0.9 * len(domains), 1.2 + 0.9 * len(domains)))
    im = ax.imshow(matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(domains)), domains, rotation=30, ha="right")
    ax.set_yticks(range(len(domains)), domains)
    ax.set_xlabel("evaluated on")
    ax.set_ylabel("trained on")
    ax.set_title(title)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center",
                    color="white" if matrix[i, j] < 0.6 else "black", fontsize=9)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sweep(
    probs: Sequence[float],
    means: Sequence[float],
    stds: Sequence[float],
    path: str | Path,
    benchmark: Optional[float] = None,
    ylabel: str = "Dice",
) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.errorbar(probs, means, yerr=stds, marker="o", capsize=3, lw=1.5)
    if benchmark is not None:
        ax.axhline(benchmark, color="gray", ls="--", lw=1, label=f"benchmark {benchmark:.2f}")
        ax.legend(frameon=False)
    ax.set_xlabel("label dropout probability")
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_class_boxplot(
    data: Mapping[str, Mapping[str, Sequence[float]]], path: str | Path, ylabel: str = "Dice"
) -> Path:
    """data[model_name][class_name] -> per-sample Dice values; grouped boxes
    per class, one color per model."""
    models = list(data)
    classes: list[str] = []
    for per_class in data.values():
        for cname in per_class:
            if cname not in classes:
                classes.append(cname)
    fig, ax = plt.subplots(figsize=(1.6 + 1.3 * len(classes), 3.6))
    width = 0.8 / max(len(models), 1)
    cmap = plt.get_cmap("tab10")
    for mi, model in enumerate(models):
        positions = [ci + mi * width - 0.4 + width / 2 for ci in range(len(classes))]
        values = [list(data[model].get(c, [])) or [np.nan] for c in classes]
        bp = ax.boxplot(values, positions=positions, widths=width * 0.85, patch_artist=True,
                        medianprops={"color": "black"})
        for box in bp["boxes"]:
            box.set_facecolor(cmap(mi))
            box.set_alpha(0.7)
    ax.set_xticks(range(len(classes)), classes)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.05)
    handles = [plt.Rectangle((0, 0), 1, 1, fc=cmap(mi), alpha=0.7) for mi in range(len(models))]
    ax.legend(handles, models, frameon=False, fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_prediction_panels(
    rows: Sequence[tuple[np.ndarray, np.ndarray, Mapping[str, np.ndarray]]],
    path: str | Path,
    alpha: float = 0.5,
) -> Path:
    """Each row: (image, ground-truth labels, {model name -> predicted labels});
    columns are image | ground truth | one column per model."""
    if not rows:
        raise ValueError("no panel rows given")
    model_names = list(rows[0][2])
    ncols = 2 + len(model_names)
    fig, axes = plt.subplots(len(rows), ncols, figsize=(1.9 * ncols, 1.9 * len(rows)), squeeze=False)
    titles = ["image", "ground truth"] + model_names
    for ri, (image, gt, preds) in enumerate(rows):
        panels = [np.repeat(image[..., None], 3, axis=-1), overlay(image, gt, alpha)]
        panels += [overlay(image, preds[m], alpha) for m in model_names]
        for ci, panel in enumerate(panels):
            ax = axes[ri][ci]
            ax.imshow(np.clip(panel, 0, 1))
            ax.set_xticks([])
            ax.set_yticks([])
            if ri == 0:
                ax.set_title(titles[ci], fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
