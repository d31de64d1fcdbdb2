"""PNG figures for a batch report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _accuracy_by_class(report, path: Path) -> None:
    per = report.per_class()
    kinds = list(per) or ["all"]
    val = [per[k]["accuracy"] or 0.0 for k in per] or [report.accuracy() or 0.0]
    abl = [per[k]["accuracy_ablated"] or 0.0 for k in per] or [report.accuracy(True) or 0.0]
    x = np.arange(len(kinds))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, val, 0.4, label="with pose validation")
    ax.bar(x + 0.2, abl, 0.4, label="without pose validation")
    ax.set_xticks(x, kinds)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("classification accuracy")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _confusion(report, path: Path) -> None:
    c = report.confusion()
    m = np.array([[c["tp"], c["fn"]], [c["fp"], c["tn"]]])
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(m, cmap="Blues")
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(m[i, j]), ha="center", va="center", fontsize=14)
    ax.set_xticks([0, 1], ["functional", "not functional"])
    ax.set_yticks([0, 1], ["functional", "not functional"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _scores(report, path: Path) -> None:
    rows = report.rows
    names = [r["name"] for r in rows]
    vals = [r["max_score"] if r["max_score"] is not None else 0.0 for r in rows]
    colors = ["tab:green" if r["label"] else "tab:red" if r["label"] is not None else "tab:gray" for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows)), 4))
    ax.bar(np.arange(len(rows)), vals, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(np.arange(len(rows)), names, rotation=70, ha="right", fontsize=7)
    ax.set_ylabel("highest score over all scenarios")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_figures(report, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fn in (("accuracy_by_class.png", _accuracy_by_class), ("confusion.png", _confusion),
                     ("scores.png", _scores)):
        fn(report, d / name)
        out.append(d / name)
    return out
