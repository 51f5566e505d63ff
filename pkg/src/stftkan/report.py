"""Figures rendered next to the CSV outputs of ``train``, ``search`` and ``params``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 8,
    "font.family": "serif",
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "legend.fontsize": 7,
    "lines.linewidth": 1.5,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 200,
    "savefig.bbox": "tight",
}

colors = ["#003366", "#e31b23", "#787878", "#1a9e00", "#03b5fc"]


def training_curves(rows: list[dict], path, timing: list[dict] | None = None, title: str = "") -> Path:
    """Loss and test accuracy per epoch; epoch time in a third panel when available."""
    path = Path(path)
    epochs = [int(r["epoch"]) for r in rows]
    with plt.rc_context(STYLE):
        ncols = 3 if timing else 2
        fig, axes = plt.subplots(1, ncols, figsize=(3.0 * ncols, 2.4))
        axes[0].plot(epochs, [r["train_loss"] for r in rows], color=colors[0])
        axes[0].set_xlabel("epoch")
        axes[0].set_ylabel("train loss")
        axes[1].plot(epochs, [r["test_oa"] for r in rows], color=colors[0], label="OA")
        axes[1].plot(epochs, [r["test_ba"] for r in rows], color=colors[1], linestyle="dashed", label="BA")
        axes[1].set_xlabel("epoch")
        axes[1].set_ylabel("test accuracy")
        axes[1].set_ylim(0, 1.02)
        axes[1].legend(loc="lower right")
        if timing:
            axes[2].plot([int(t["epoch"]) for t in timing], [t["epoch_time_s"] for t in timing], color=colors[2])
            axes[2].set_xlabel("epoch")
            axes[2].set_ylabel("epoch time (s)")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def search_ranking(rows: list[dict], path) -> Path:
    path = Path(path)
    ordered = sorted(rows, key=lambda r: r["trial"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.4))
        ax.bar([r["trial"] for r in ordered], [r["test_oa"] for r in ordered], color=colors[0])
        best = max(rows, key=lambda r: r["test_oa"])
        ax.bar([best["trial"]], [best["test_oa"]], color=colors[1])
        ax.set_xlabel("trial")
        ax.set_ylabel("final test OA")
        ax.set_ylim(0, 1.0)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def param_bars(counts: dict[str, int], path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 2.4))
        names = list(counts)
        values = [counts[n] / 1e6 for n in names]
        ax.bar(names, values, color=colors[: len(names)])
        for i, v in enumerate(values):
            ax.text(i, v, f"{v:.2f}M", ha="center", va="bottom")
        ax.set_ylabel("parameters (M)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
