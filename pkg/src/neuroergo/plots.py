"""SVG figures for evaluation reports.

Output is deterministic: a fixed SVG id salt and no date metadata.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import gaussian_kde  # noqa: E402

CLASS_COLORS = {1: "#1f77b4", 2: "#ff7f0e", 3: "#2ca02c"}
_RC = {"svg.hashsalt": "neuroergo", "svg.fonttype": "none"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_curves(history, path):
    """Loss and accuracy per epoch for the training and validation sets."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
        ep = np.arange(1, len(history["train_loss"]) + 1)
        for key, style in (("train", "-"), ("val", "--")):
            ax1.plot(ep, history[f"{key}_loss"], style, label=key)
            ax2.plot(ep, history[f"{key}_acc"], style, label=key)
        ax1.set(xlabel="epoch", ylabel="loss")
        ax2.set(xlabel="epoch", ylabel="accuracy", ylim=(0, 1.02))
        ax1.legend()
        fig.tight_layout()
        _save(fig, path)


def plot_roc(roc, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 4))
        for key in ("micro", "macro", "class_1", "class_2", "class_3"):
            r = roc[key]
            ax.plot(r["fpr"], r["tpr"], label=f"{key.replace('_', ' ')} (AUC {r['auc']:.3f})")
        ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls=":")
        ax.set(xlabel="false positive rate", ylabel="true positive rate", xlim=(0, 1), ylim=(0, 1.01))
        ax.legend(fontsize=7, loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def plot_confusion(cm, path):
    cm = np.asarray(cm)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        ax.imshow(cm, cmap="Blues")
        for i in range(cm.shape[0]):
            for j in range(cm.shape[1]):
                ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                        color="white" if cm[i, j] > cm.max() / 2 else "black")
        ticks = np.arange(cm.shape[0])
        ax.set(xticks=ticks, yticks=ticks, xticklabels=ticks + 1, yticklabels=ticks + 1,
               xlabel="predicted", ylabel="true")
        fig.tight_layout()
        _save(fig, path)


def _density(ax, values, color, vertical=False):
    if np.ptp(values) == 0 or values.size < 2:
        return
    grid = np.linspace(values.min(), values.max(), 100)
    dens = gaussian_kde(values)(grid)
    if vertical:
        ax.plot(dens, grid, color=color)
    else:
        ax.plot(grid, dens, color=color)


def plot_tsne(embedding, labels, path):
    """Scatter of the 2-D embedding with per-class density marginals."""
    labels = np.asarray(labels)
    with plt.rc_context(_RC):
        fig = plt.figure(figsize=(4.6, 4.6))
        gs = fig.add_gridspec(2, 2, width_ratios=(4, 1), height_ratios=(1, 4), wspace=0.05, hspace=0.05)
        ax = fig.add_subplot(gs[1, 0])
        top = fig.add_subplot(gs[0, 0], sharex=ax)
        right = fig.add_subplot(gs[1, 1], sharey=ax)
        for c, color in CLASS_COLORS.items():
            pts = embedding[labels == c]
            if not len(pts):
                continue
            ax.scatter(pts[:, 0], pts[:, 1], s=8, color=color, label=f"category {c}")
            _density(top, pts[:, 0], color)
            _density(right, pts[:, 1], color, vertical=True)
        top.axis("off")
        right.axis("off")
        ax.legend(fontsize=7)
        _save(fig, path)
