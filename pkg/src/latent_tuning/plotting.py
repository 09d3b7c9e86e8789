"""Matplotlib figures for tuning runs and cross-run reports (written to files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def projection_grid(columns: dict, pairs, extents, path, title: str = "") -> None:
    """Rows are axis pairs; ``columns`` maps a label to a (N_c, H, W) stack."""
    labels = list(columns)
    fig, axes = plt.subplots(len(pairs), len(labels), figsize=(2.6 * len(labels), 2.4 * len(pairs)),
                             squeeze=False)
    for r, pair in enumerate(pairs):
        (x0, x1), (y0, y1) = extents[r]
        vmax = max(float(columns[c][r].max()) for c in labels)
        for c, label in enumerate(labels):
            ax = axes[r, c]
            ax.imshow(columns[label][r].T, origin="lower", extent=(x0, x1, y0, y1),
                      aspect="auto", cmap="viridis", vmin=0.0, vmax=vmax)
            if r == 0:
                ax.set_title(label)
            ax.set_xlabel(pair.first)
            ax.set_ylabel(pair.second)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def cost_history(series: dict, path, ylabel: str = "normalized (z,E) cost") -> None:
    """``series`` maps a run label to (steps, cost)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, (steps, cost) in series.items():
        ax.plot(steps, cost, lw=0.8, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("ES step")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    _save(fig, path)


def hidden_mse(series: dict, path) -> None:
    """``series`` maps a pair label to (steps, tuned mse, untuned mse)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, (label, (steps, tuned, base)) in enumerate(series.items()):
        color = f"C{i}"
        ax.plot(steps, tuned, color=color, label=f"{label} tuned")
        ax.plot(steps, base, color=color, ls="--", label=f"{label} untuned")
    ax.set_xlabel("ES step")
    ax.set_ylabel("hidden-pair mse")
    ax.legend(fontsize=8)
    _save(fig, path)


def overlap_bars(overlaps: dict, path) -> None:
    """``overlaps`` maps a run label to per-component PCA overlap coefficients."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    n_runs = max(len(overlaps), 1)
    width = 0.8 / n_runs
    for i, (label, ov) in enumerate(overlaps.items()):
        x = np.arange(1, len(ov) + 1) + (i - (n_runs - 1) / 2) * width
        ax.bar(x, ov, width=width, label=label)
    ax.axhline(0.9, color="k", lw=0.7, ls=":")
    ax.set_xlabel("principal component")
    ax.set_ylabel("histogram overlap")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    _save(fig, path)
