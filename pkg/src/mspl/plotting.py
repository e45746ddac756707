"""Figures written next to the CSV reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0

params = {
    "font.family": "sans-serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "legend.fancybox": False,
    "legend.edgecolor": "black",
    "axes.axisbelow": True,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "savefig.pad_inches": 0.02,
}

colors = {
    "blue": "#215CAF",
    "red": "#B7352D",
    "green": "#627313",
    "petrol": "#007894",
    "grey": "#6F6F6F",
}


def _figure(width=5.0, height=None, **kw):
    height = height or width * golden_mean
    with plt.rc_context(params):
        return plt.subplots(figsize=(width, height), **kw)


def _save(fig, path):
    with plt.rc_context(params):
        fig.savefig(path)
    plt.close(fig)


def plot_history(history, path, title=None):
    """Training loss (left) and validation metrics (right) per epoch."""
    epochs = np.arange(1, len(history) + 1)
    fig, (ax1, ax2) = _figure(8.0, 3.0, ncols=2)
    ax1.plot(epochs, history.train_loss, color=colors["blue"])
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss (summed)")
    ax1.grid(alpha=0.3)
    for name, c in (("val_balanced_accuracy", "blue"), ("val_macro_f1", "red"), ("val_auprc", "green")):
        ax2.plot(epochs, getattr(history, name), color=colors[c], label=name[4:].replace("_", " "))
    if history.best_epoch >= 0:
        ax2.axvline(history.best_epoch + 1, color=colors["grey"], ls="--", lw=0.8, label="best")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0, 1.02)
    ax2.grid(alpha=0.3)
    ax2.legend(loc="lower right")
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_aggregate(agg, path):
    names = list(agg.mean)
    fig, ax = _figure(4.0)
    x = np.arange(len(names))
    ax.bar(x, [agg.mean[n] for n in names], yerr=[agg.std[n] for n in names],
           color=[colors["blue"], colors["red"], colors["green"]][: len(names)], capsize=3)
    ax.set_xticks(x, [n.replace("_", "\n") for n in names])
    ax.set_ylim(0, 1.05)
    ax.set_ylabel(f"mean ± std over {agg.n_seeds} seeds")
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_sweep(rows, path):
    """Horizontal bars of mean macro F1 per weight configuration, best on top."""
    rows = list(rows)
    fig, ax = _figure(6.0, 0.3 * len(rows) + 1.0)
    y = np.arange(len(rows))[::-1]
    ax.barh(y, [r["mean_macro_f1"] for r in rows], xerr=[r["std_macro_f1"] for r in rows],
            color=colors["petrol"], capsize=2)
    ax.set_yticks(y, [r["label"] for r in rows])
    ax.set_xlabel("mean validation macro F1")
    ax.set_xlim(0, 1.05)
    ax.grid(axis="x", alpha=0.3)
    _save(fig, path)
