"""Report figures: warping paths against annotated onset pairs, and error
histograms.  Rendered headless to files next to the delimited report output.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_warping_path(path_pairs, gt_pairs=None, title="", out_png=None):
    """Scatter the alignment path (frames) with ground-truth pairs overlaid."""
    fig, ax = plt.subplots(figsize=(6, 5))
    pairs = np.asarray(path_pairs)
    ax.plot(pairs[:, 1], pairs[:, 0], ".", ms=2, color="tab:purple", label="alignment path")
    if gt_pairs is not None and len(gt_pairs):
        gt = np.asarray(gt_pairs)
        ax.plot(gt[:, 1], gt[:, 0], "o", ms=4, color="tab:red", label="annotated onsets")
    ax.set_xlabel("target / b frames")
    ax.set_ylabel("reference / a frames")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    if out_png:
        fig.savefig(out_png, dpi=110)
        plt.close(fig)
        return Path(out_png)
    return fig


def plot_error_histogram(errors_ms, title="", out_png=None):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    errors_ms = np.asarray(errors_ms)
    ax.hist(errors_ms, bins=30, color="tab:blue", alpha=0.8)
    ax.axvline(float(np.median(errors_ms)), color="tab:red", ls="--", lw=1, label="median")
    ax.set_xlabel("absolute onset error (ms)")
    ax.set_ylabel("count")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    if out_png:
        fig.savefig(out_png, dpi=110)
        plt.close(fig)
        return Path(out_png)
    return fig


def render_report_figures(results, figures_dir) -> list[Path]:
    """Per-song path figures for every phase/feature that kept its path."""
    figures_dir = Path(figures_dir)
    figures_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for res in results:
        for key, (pairs, gt) in res.get("paths", {}).items():
            safe = key.replace(":", "_").replace("+", "-")
            out = figures_dir / f"{res['song']}_{safe}.png"
            # paths are (a, b); ground truth arrives as (a_time, b_time) frames
            gt_ab = gt[:, [0, 1]]
            plot_warping_path(pairs, gt_ab, f"{res['song']} {key}", out)
            written.append(out)
    return written
