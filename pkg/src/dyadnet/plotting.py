"""Matplotlib figures written next to the text reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no Software/date chunks, so repeated runs write identical PNG bytes
_PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_confusion(cm, path, title=None):
    pct = cm.percentages
    cells = cm.rounded_percentages()
    k = len(cm.labels)
    fig, ax = plt.subplots(figsize=(1.4 * k + 2.0, 1.2 * k + 1.5))
    im = ax.imshow(pct, cmap="Oranges", vmin=0.0, vmax=100.0)
    for i in range(k):
        for j in range(k):
            ax.text(j, i, cells[i][j], ha="center", va="center",
                    color="white" if pct[i, j] > 60 else "black", fontsize=9)
    ax.set_xticks(range(k))
    ax.set_xticklabels(cm.labels, rotation=30, ha="right")
    ax.set_yticks(range(k))
    ax.set_yticklabels(cm.labels)
    ax.set_xlabel("Predicted value")
    ax.set_ylabel("Real value")
    ax.set_title(title or "Confusion matrix (in %)")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    _save(fig, path)


def plot_training_curve(report, path):
    epochs = np.array([e.epoch for e in report.epochs])
    loss = np.array([e.loss for e in report.epochs])
    acc = np.array([e.accuracy for e in report.epochs])
    fig, ax1 = plt.subplots(figsize=(6.0, 3.6))
    ax1.plot(epochs, loss, color="tab:blue", lw=1.2)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("mean training loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(epochs, acc, color="tab:orange", lw=1.2)
    ax2.set_ylabel("training accuracy (%)", color="tab:orange")
    ax2.set_ylim(0, 100)
    ax1.set_title(f"{report.model} (seed {report.seed})")
    fig.tight_layout()
    _save(fig, path)
