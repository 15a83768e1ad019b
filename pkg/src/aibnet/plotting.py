"""Render training / evaluation / sweep reports as PNG figures next to their
CSV counterparts."""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_training_curves(log_csv, out_png) -> Path:
    """Loss components and learning rate over iterations, one line per stage."""
    rows = _read_csv(log_csv)
    if not rows:
        raise ValueError(f"no rows in {log_csv}")
    by_stage = defaultdict(list)
    for row in rows:
        by_stage[int(row["stage"])].append(row)
    fig, (ax_loss, ax_lr) = plt.subplots(2, 1, figsize=(7, 6), sharex=False)
    for stage, stage_rows in sorted(by_stage.items()):
        iters = [int(r["iter"]) for r in stage_rows]
        ax_loss.plot(iters, [float(r["loss"]) for r in stage_rows], label=f"stage {stage}")
        ax_lr.plot(iters, [float(r["lr"]) for r in stage_rows], label=f"stage {stage}")
    ax_loss.set_ylabel("total loss")
    ax_loss.set_yscale("log")
    ax_loss.legend(fontsize=8)
    ax_loss.grid(alpha=0.3)
    ax_lr.set_xlabel("iteration (within stage)")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_yscale("log")
    ax_lr.grid(alpha=0.3)
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_metric_curves(metrics_csv, out_png) -> Path:
    """Mean PSNR per (stage, iteration, split) from the metrics CSV."""
    rows = _read_csv(metrics_csv)
    if not rows:
        raise ValueError(f"no rows in {metrics_csv}")
    grouped = defaultdict(list)
    for row in rows:
        key = (row["split"], int(row["stage"]), int(row["iter"]))
        grouped[key].append(float(row["psnr_db"]))
    fig, ax = plt.subplots(figsize=(7, 4))
    splits = sorted({k[0] for k in grouped})
    for split in splits:
        points = sorted((stage, it) for s, stage, it in grouped if s == split)
        labels = [f"s{stage}@{it}" for stage, it in points]
        means = [sum(grouped[(split, stage, it)]) / len(grouped[(split, stage, it)])
                 for stage, it in points]
        ax.plot(range(len(points)), means, marker="o", label=split)
        ax.set_xticks(range(len(points)), labels, rotation=45, fontsize=8)
    ax.set_ylabel("mean PSNR (dB)")
    ax.set_xlabel("stage @ iteration")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png


def plot_sweep(rows, out_png, title) -> Path:
    """Bar chart for an ablation sweep report."""
    fig, ax = plt.subplots(figsize=(7, 4))
    labels = [r["label"] for r in rows]
    values = [r["psnr_db"] for r in rows]
    ax.bar(range(len(rows)), values, color="#4878cf")
    ax.set_xticks(range(len(rows)), labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("held-out PSNR (dB)")
    ax.set_title(title)
    lo, hi = min(values), max(values)
    margin = max(0.2, (hi - lo) * 0.2)
    ax.set_ylim(lo - margin, hi + margin)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    return out_png
