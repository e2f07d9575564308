"""Render confusion matrices and metric reports to image files.

Output is deterministic: fixed figure geometry, fixed metadata, no
timestamps, so rerunning a report produces byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt
import numpy as np

from .merging import row_normalize
from .metrics import MetricsReport, Tally
from .taxonomy import Taxonomy

_METADATA = {"Software": "glasskit"}


def save_confusion_figure(counts: np.ndarray, taxonomy: Taxonomy, path) -> None:
    """Row-normalized confusion heatmap (rows: ground truth, columns: prediction)."""
    fractions = row_normalize(counts)
    names = [c.name for c in taxonomy.classes]
    k = len(names)
    side = max(5.0, 0.5 * k + 2.0)
    fig, ax = plt.subplots(figsize=(side + 1.2, side))
    im = ax.imshow(fractions, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(k), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(k), names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    if k <= 20:
        for i in range(k):
            for j in range(k):
                v = fractions[i, j]
                if v >= 0.005:
                    ax.text(
                        j, i, f"{v:.2f}",
                        ha="center", va="center", fontsize=7,
                        color="black" if v > 0.5 else "white",
                    )
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="row fraction")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_METADATA)
    plt.close(fig)


def save_metrics_figure(report: MetricsReport, tally: Tally, taxonomy: Taxonomy, path) -> None:
    """Per-class IoU/Acc bars; undefined classes are left blank."""
    names = [c.name for c in taxonomy.classes]
    k = len(names)
    y = np.arange(k)
    fig, ax = plt.subplots(figsize=(7.0, max(3.0, 0.4 * k + 1.5)))
    ax.barh(y - 0.2, report.iou, height=0.38, label=f"IoU (mIoU={report.miou:.4f})")
    ax.barh(y + 0.2, report.acc, height=0.38, label=f"Acc (mAcc={report.macc:.4f})")
    ax.set_yticks(y, names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("score")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_METADATA)
    plt.close(fig)
