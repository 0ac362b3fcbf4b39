"""Figure rendering for run reports.

PNG files written next to the delimited output: selection runs get a
lambda/level trajectory figure plus a level-vs-lambda scatter; fixed-lambda
runs get their objective traces.  Rendering uses the Agg backend so it
works headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_selection_figures(selection: dict, out_dir: Path) -> list[Path]:
    """Figures for a selection run, from its JSON-ready report dict."""
    out_dir = Path(out_dir)
    iterations = selection["iterations"]
    idx = [it["iteration"] for it in iterations]
    lams = [it["lambda"] for it in iterations]
    totals = [it["total_level"] for it in iterations]
    targets = selection["config"]["targets"]
    multi = isinstance(lams[0], list)

    fig, (ax_lam, ax_level) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    if multi:
        lam_matrix = np.asarray(lams)
        level_matrix = np.asarray([it["levels"] for it in iterations])
        for k in range(lam_matrix.shape[1]):
            ax_lam.plot(idx, lam_matrix[:, k], marker="o", label=f"layer {k + 1}")
            line, = ax_level.plot(idx, level_matrix[:, k], marker="o", label=f"layer {k + 1}")
            ax_level.axhline(targets[k], color=line.get_color(), linestyle="--", linewidth=0.8)
        ax_lam.legend(fontsize=8)
    else:
        ax_lam.plot(idx, lams, marker="o", color="tab:blue")
        ax_level.plot(idx, totals, marker="o", color="tab:blue")
        ax_level.axhline(targets, color="tab:red", linestyle="--", linewidth=0.8,
                         label="target")
        ax_level.legend(fontsize=8)
    ax_lam.set_yscale("log")
    ax_lam.set_xlabel("iteration")
    ax_lam.set_ylabel("lambda")
    ax_level.set_xlabel("iteration")
    ax_level.set_ylabel("nonzero weights")
    trajectory = _finish(fig, out_dir / "selection_trajectory.png")

    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    if multi:
        for k in range(lam_matrix.shape[1]):
            ax.scatter(lam_matrix[:, k], level_matrix[:, k], label=f"layer {k + 1}", s=22)
        ax.legend(fontsize=8)
    else:
        ax.scatter(lams, totals, color="tab:blue", s=22)
        ax.axhline(targets, color="tab:red", linestyle="--", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("nonzero weights")
    scatter = _finish(fig, out_dir / "level_vs_lambda.png")
    return [trajectory, scatter]


def render_loss_traces(traces: Sequence[tuple[str, np.ndarray]], out_dir: Path,
                       ylabel: str = "objective") -> list[Path]:
    """One curve per (label, per-epoch trace) pair."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for label, trace in traces:
        ax.plot(np.arange(1, len(trace) + 1), trace, label=label, linewidth=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    if len(traces) > 1:
        ax.legend(fontsize=8)
    if all(np.all(np.asarray(t) > 0) for _, t in traces):
        ax.set_yscale("log")
    return [_finish(fig, out_dir / "loss_trace.png")]
