"""Matplotlib rendering of report figures next to the delimited outputs.

All functions write PNG files; matplotlib stays an implementation detail of
this module (Agg backend, no display required).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(history, path, title="training loss"):
    """history: iterable of (epoch, step, lr, loss) rows."""
    steps = [row[1] for row in history]
    losses = [row[3] for row in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_curves(histories, path):
    """histories: mapping from configuration label to loss-history rows."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, history in histories.items():
        ax.plot([row[1] for row in history], [row[3] for row in history],
               lw=1.0, label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("component ablation convergence")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_error_map_figure(err, path, max_bands: int = 8):
    """Grid of per-band absolute-error heatmaps (first max_bands bands)."""
    err = np.asarray(err)
    n = min(err.shape[0], max_bands)
    cols = min(4, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    vmax = float(err[:n].max()) or 1.0
    for i in range(rows * cols):
        ax = axes[i // cols][i % cols]
        if i < n:
            im = ax.imshow(err[i], cmap="jet", vmin=0.0, vmax=vmax)
            ax.set_title(f"band {i}", fontsize=9)
        ax.axis("off")
    fig.colorbar(im, ax=[a for row in axes for a in row], shrink=0.8, label="|error|")
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_spectral_figure(hr_values, sr_values, pixel, path):
    """Reference vs reconstructed spectrum at one pixel."""
    bands = np.arange(len(hr_values))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(bands, hr_values, "o-", lw=1.2, ms=3, label="reference")
    ax.plot(bands, sr_values, "s--", lw=1.2, ms=3, label="reconstructed")
    ax.set_xlabel("band index")
    ax.set_ylabel("value")
    ax.set_title(f"spectrum at pixel {pixel}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_param_count_figure(groups_separable, groups_standard, path):
    """Side-by-side per-group parameter totals for the two block variants."""
    labels = list(groups_separable)
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, [groups_separable[g] for g in labels], width=0.4, label="separable")
    ax.bar(x + 0.2, [groups_standard[g] for g in labels], width=0.4, label="standard")
    ax.set_xticks(x, labels)
    ax.set_ylabel("trainable scalars")
    ax.set_title("parameter count by layer group")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
