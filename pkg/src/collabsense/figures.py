"""Matplotlib rendering of sweep reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_sweep_figure(rows, path, dpi: int = 150) -> Path:
    """One distortion-vs-budget curve per collaboration degree, log-log.

    Infinite cells (no estimable mixing matrix found) are simply left off
    their curve.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for q in sorted({row.q for row in rows}):
        pts = sorted((row.p0, row.distortion) for row in rows if row.q == q)
        budgets = np.array([p for p, _ in pts])
        distortions = np.array([d for _, d in pts])
        finite = np.isfinite(distortions)
        if finite.any():
            ax.loglog(budgets[finite], distortions[finite], marker="o",
                      markersize=4, label=f"q = {q}")
    ax.set_xlabel("cumulative transmit power budget")
    ax.set_ylabel("total estimation distortion")
    ax.grid(True, which="both", alpha=0.3)
    if ax.lines:
        ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
