"""Figure rendering for pipeline outputs.

All functions write PNG files and never open a window; the Agg backend
is forced before pyplot loads so runs work headless.  Inputs mirror the
delimited outputs written next to them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _position_colors(gt: np.ndarray) -> np.ndarray:
    """Map 2-D ground-truth positions to RGB so neighborhood structure is
    visible in both panels of a chart figure."""
    gt = np.asarray(gt, dtype=np.float64)[:, :2]
    lo = gt.min(axis=0)
    span = gt.max(axis=0) - lo
    span[span == 0.0] = 1.0
    unit = (gt - lo) / span
    return np.column_stack([unit[:, 0], unit[:, 1], np.full(len(gt), 0.55)])


def save_chart_figure(gt_positions, chart, path, title: str = "") -> None:
    """Side-by-side ground truth and learned chart, matching colors."""
    gt = np.asarray(gt_positions, dtype=np.float64)
    chart = np.asarray(chart, dtype=np.float64)
    colors = _position_colors(gt)
    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    axes[0].scatter(gt[:, 0], gt[:, 1], c=colors, s=6)
    axes[0].set_title("ground truth")
    axes[0].set_aspect("equal")
    axes[1].scatter(chart[:, 0], chart[:, 1], c=colors, s=6)
    axes[1].set_title("channel chart")
    axes[1].set_aspect("equal")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_memory_figure(snapshot, path, title: str = "",
                       n_stream_samples: int | None = None) -> None:
    """Memory contents after a pass: stored positions colored by arrival
    index next to the arrival-index histogram."""
    arrivals = np.array([row[0] for row in snapshot], dtype=np.int64)
    positions = [row[1] for row in snapshot]
    known = [p for p in positions if p is not None]
    fig, axes = plt.subplots(1, 2, figsize=(11, 5))
    if known:
        pts = np.stack(known)[:, :2]
        arr = np.array([a for a, p in zip(arrivals, positions) if p is not None])
        sc = axes[0].scatter(pts[:, 0], pts[:, 1], c=arr, cmap="viridis", s=10)
        fig.colorbar(sc, ax=axes[0], label="arrival index")
        axes[0].set_aspect("equal")
        axes[0].set_title("stored sample positions")
    else:
        axes[0].text(0.5, 0.5, "no reference positions", ha="center", va="center")
        axes[0].set_axis_off()
    hi = n_stream_samples if n_stream_samples else (arrivals.max() + 1 if arrivals.size else 1)
    axes[1].hist(arrivals, bins=20, range=(0, hi), color="#33567d")
    axes[1].set_xlabel("arrival index")
    axes[1].set_ylabel("stored samples")
    axes[1].set_title("arrival coverage")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_loss_figure(epoch_losses, path, title: str = "") -> None:
    """Mean per-pair loss per epoch on a log axis."""
    losses = np.asarray(epoch_losses, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(np.arange(1, losses.size + 1), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean pair loss")
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)