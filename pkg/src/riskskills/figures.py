"""Matplotlib renderings of run artifacts (headless Agg backend)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .learner import CurvePoint  # noqa: E402


def save_curve_figure(points: Sequence[CurvePoint], path: str, mode: str = "pg") -> str:
    """Learning curve: mean episode return and success probability vs episodes."""
    episodes = [p.episodes for p in points]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(episodes, [p.mean_return for p in points],
            color="tab:blue", lw=1.0, label="mean episode return")
    ax.set_xlabel("episodes")
    ax.set_ylabel("mean episode return", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(episodes, [p.success_prob for p in points],
             color="tab:red", lw=1.0, alpha=0.8, label="success probability")
    ax2.set_ylabel("success probability", color="tab:red")
    ax2.set_ylim(-0.02, 1.02)
    ax2.tick_params(axis="y", labelcolor="tab:red")
    ax.set_title(f"training curve ({mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_heatmap_figure(rows: Sequence[tuple[float, float, float, float]],
                        path: str, title: str = "mean dribble power") -> str:
    """Striker-position grid of clamped mean dribble power."""
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    grid = np.full((len(ys), len(xs)), np.nan)
    xi = {x: i for i, x in enumerate(xs)}
    yi = {y: i for i, y in enumerate(ys)}
    for x, y, _, clamped in rows:
        grid[yi[y], xi[x]] = clamped
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(grid, origin="lower", extent=(0, 1, 0, 1), aspect="auto",
                   cmap="viridis")
    fig.colorbar(im, ax=ax, label="clamped mean power")
    ax.set_xlabel("striker x (goal at x=1)")
    ax.set_ylabel("striker y")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_outcome_figure(labels: Sequence[str], counts: Sequence[int], path: str,
                        title: str = "evaluation outcomes") -> str:
    """Bar chart of evaluation outcome counts."""
    if len(labels) != len(counts):
        raise ValueError("labels and counts must align")
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(range(len(labels)), counts, color="tab:gray")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_ylabel("episodes")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
