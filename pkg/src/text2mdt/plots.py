"""Figures written next to the stats and eval reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .data import CorpusStats  # noqa: E402
from .metrics import EvalReport  # noqa: E402

FIG_WIDTH = 6.0
GOLDEN = 0.618


def _figure(width: float = FIG_WIDTH):
    fig, ax = plt.subplots(figsize=(width, width * GOLDEN))
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    return fig, ax


def _bar_labels(ax, bars, fmt="{:d}"):
    for b in bars:
        h = b.get_height()
        ax.annotate(fmt.format(h), (b.get_x() + b.get_width() / 2, h), ha="center", va="bottom", fontsize=8)


def plot_stats(stats: CorpusStats, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = _figure()
    depths = sorted(stats.depth_histogram)
    bars = ax.bar([str(d) for d in depths], [stats.depth_histogram[d] for d in depths], color="#4c72b0")
    _bar_labels(ax, bars)
    ax.set_xlabel("tree depth")
    ax.set_ylabel("records")
    ax.set_title(f"Tree depth ({stats.record_count} records)")
    fig.tight_layout()
    paths.append(outdir / "depth_histogram.png")
    fig.savefig(paths[-1], dpi=150)
    plt.close(fig)

    fig, ax = _figure(7.0)
    names = list(stats.relation_histogram)
    bars = ax.bar(range(len(names)), [stats.relation_histogram[n] for n in names], color="#55a868")
    _bar_labels(ax, bars)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("triplets")
    ax.set_title("Triplet relations")
    fig.tight_layout()
    paths.append(outdir / "relation_histogram.png")
    fig.savefig(paths[-1], dpi=150)
    plt.close(fig)
    return paths


def plot_eval(report: EvalReport, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    scores = report.summary()
    fig, ax = _figure(7.0)
    bars = ax.bar(range(len(scores)), list(scores.values()), color="#8172b2")
    _bar_labels(ax, bars, "{:.3f}")
    ax.set_xticks(range(len(scores)))
    ax.set_xticklabels(list(scores), rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, max(1.05, max(scores.values(), default=1) * 1.1))
    ax.set_title(f"Aggregate scores ({len(report.per_record)} records)")
    fig.tight_layout()
    paths.append(outdir / "eval_scores.png")
    fig.savefig(paths[-1], dpi=150)
    plt.close(fig)

    fig, ax = _figure()
    data = [[r.tree_lr for r in report.per_record], [r.dp.f1 for r in report.per_record]]
    ax.hist(data, bins=10, range=(0, 1), label=["Tree_LR", "DP-F1"], color=["#4c72b0", "#dd8452"])
    ax.set_xlabel("per-record score")
    ax.set_ylabel("records")
    ax.legend(frameon=False)
    fig.tight_layout()
    paths.append(outdir / "eval_per_record.png")
    fig.savefig(paths[-1], dpi=150)
    plt.close(fig)
    return paths
