"""PNG figures written next to the CSV reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 110,
    "savefig.bbox": "tight",
}


def training_curve(report, path, title=None):
    """Train loss and validation accuracy per epoch, best epoch marked."""
    epochs = [r.epoch for r in report.epochs]
    with plt.rc_context(STYLE):
        fig, ax1 = plt.subplots(figsize=(5.5, 3.2))
        ax1.plot(epochs, [r.train_loss for r in report.epochs], color="tab:blue", lw=1.4)
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("train loss", color="tab:blue")
        ax2 = ax1.twinx()
        ax2.plot(epochs, [r.val_acc for r in report.epochs], color="tab:red", lw=1.4)
        ax2.set_ylabel("validation accuracy", color="tab:red")
        ax2.set_ylim(0, 1)
        if report.best_epoch >= 0:
            ax2.axvline(report.best_epoch, color="0.5", ls="--", lw=0.8)
        if title:
            ax1.set_title(title)
        fig.savefig(path)
        plt.close(fig)


def per_emotion_bars(result, path, title=None):
    labels = [m.label for m in result.per_emotion]
    x = range(len(labels))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.5, 3.2))
        w = 0.27
        ax.bar([i - w for i in x], [m.precision for m in result.per_emotion], w, label="precision")
        ax.bar(list(x), [m.recall for m in result.per_emotion], w, label="recall")
        ax.bar([i + w for i in x], [m.f1 for m in result.per_emotion], w, label="F1")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=40, ha="right")
        ax.set_ylim(0, 1)
        ax.legend(frameon=False, ncol=3, loc="lower right", bbox_to_anchor=(1.0, 1.0))
        ax.set_title(title or f"accuracy {result.accuracy:.3f}", loc="left")
        fig.savefig(path)
        plt.close(fig)
