"""PNG figures written next to the CSV/JSON outputs (headless Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _grid_axes(count: int):
    cols = min(count, 4)
    rows = -(-count // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.8 * rows), squeeze=False)
    for ax in axes.ravel()[count:]:
        ax.set_visible(False)
    return fig, axes.ravel()


def plot_marginals(points: np.ndarray, values: np.ndarray, path, names=None) -> None:
    """One panel per criterion; one curve per timestamp, darker = later."""
    m, T, _ = values.shape
    fig, axes = _grid_axes(m)
    cmap = plt.get_cmap("viridis")
    for j in range(m):
        ax = axes[j]
        for t in range(T):
            ax.plot(points[j, t], values[j, t], color=cmap(t / max(T - 1, 1)), lw=0.9, marker=".", ms=3)
        ax.set_title(names[j] if names else f"criterion {j + 1}")
        ax.set_xlabel("performance g")
        ax.set_ylabel("sub-marginal f")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_discounts(tau: np.ndarray, path, names=None) -> None:
    """Mean gate output per timestamp with a one-std band; ``tau`` is (n, T-1, m)."""
    n, steps, m = tau.shape
    fig, ax = plt.subplots(figsize=(6, 3.5))
    t = np.arange(1, steps + 1)
    for j in range(m):
        mean = tau[:, :, j].mean(axis=0)
        std = tau[:, :, j].std(axis=0)
        label = names[j] if names else f"criterion {j + 1}"
        ax.plot(t, mean, label=label)
        ax.fill_between(t, mean - std, mean + std, alpha=0.2)
    ax.set_ylim(0, 1)
    ax.set_xlabel("timestamp")
    ax.set_ylabel("discount tau")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_fold_metrics(report: dict, path) -> None:
    """Per-fold test macro F and accuracy, with the cross-fold mean dashed."""
    folds = report["folds"]
    idx = np.array([f["fold"] for f in folds])
    f1 = np.array([f["test_metrics"]["macro_f"] for f in folds])
    acc = np.array([f["test_metrics"]["accuracy"] for f in folds])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(idx - 0.2, f1, width=0.4, label="macro F")
    ax.bar(idx + 0.2, acc, width=0.4, label="accuracy")
    ax.axhline(f1.mean(), ls="--", color="k", lw=1)
    ax.set_xticks(idx)
    ax.set_xlabel("fold")
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
