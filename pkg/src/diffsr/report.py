"""Figure rendering for experiment reports.

Figures are written next to the CSV tables with fixed size/dpi and stripped
PNG metadata so repeated runs produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport

_SAVE_KW = dict(dpi=120, metadata={"Software": None})


def save_comparison_figure(path, panels) -> None:
    """Side-by-side grayscale panels: (title, ImageGrid) pairs."""
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(2.4 * n, 2.8))
    if n == 1:
        axes = [axes]
    for ax, (title, image) in zip(axes, panels):
        ax.imshow(image.data, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_metrics_figure(path, reports: dict) -> None:
    """Bar chart per metric across methods; failed methods are skipped."""
    ok = {m: r for m, r in reports.items() if isinstance(r, MetricReport)}
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.0))
    for ax, metric in zip(axes, ("psnr", "ssim", "rmse")):
        names = list(ok)
        values = [getattr(ok[m], metric) for m in names]
        finite = [0.0 if not np.isfinite(v) else v for v in values]
        ax.bar(range(len(names)), finite, color="steelblue")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
        ax.set_title(metric.upper(), fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
