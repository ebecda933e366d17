"""Matplotlib figures written next to the CLI's text output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {"font.size": 9, "axes.spines.top": False, "axes.spines.right": False,
         "axes.grid": True, "grid.alpha": 0.3, "figure.dpi": 100}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def save_grid_png(rows, path, context=None, scale=1):
    """Tile (R, T, H, W, 3) uint8 frames into one image, one row per sequence.

    A 1-pixel white separator marks the end of the context window.
    """
    r, t, h, w, c = rows.shape
    grid = np.zeros((r * h, t * w, c), dtype=np.uint8)
    for i in range(r):
        for j in range(t):
            grid[i * h:(i + 1) * h, j * w:(j + 1) * w] = rows[i, j]
    if context:
        grid[:, context * w - 1] = 255
    if scale > 1:
        grid = grid.repeat(scale, axis=0).repeat(scale, axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, grid)
    return path


def plot_training(history, path, keys=("image_loss", "kl_loss", "reward_loss")):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3))
        steps = [h["step"] for h in history]
        for k in keys:
            if history and k in history[0]:
                axes[0].plot(steps, [h[k] for h in history], label=k.replace("_loss", ""))
        axes[0].set_xlabel("gradient step")
        axes[0].set_ylabel("loss")
        axes[0].legend(frameon=False)
        if history and "gate_prob_mean" in history[0]:
            axes[1].plot(steps, [h["gate_prob_mean"] for h in history], color="C3")
            axes[1].set_ylabel("mean gate probability")
        elif history and "imag_return" in history[0]:
            axes[1].plot(steps, [h["imag_return"] for h in history], color="C2")
            axes[1].set_ylabel("imagined return")
        axes[1].set_xlabel("gradient step")
        return _save(fig, path)


def plot_eval(rows, path, field="score"):
    """Per-seed histogram of one evaluation field."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        vals = np.array([getattr(r[2], field) if hasattr(r[2], field) else r[2] for r in rows],
                        dtype=float)
        seeds = np.array([r[0] for r in rows])
        for s in np.unique(seeds):
            ax.plot(np.full(np.sum(seeds == s), s), vals[seeds == s], "o", alpha=0.6)
        ax.axhline(vals.mean(), color="k", lw=1, ls="--")
        ax.set_xlabel("evaluation seed")
        ax.set_ylabel(field)
        return _save(fig, path)


def plot_probe(results, path):
    """Training-loss curves of memory-probe runs, one line per (cell, seed)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        colors = {}
        for r in results:
            label = None if r.cell in colors else r.cell
            c = colors.setdefault(r.cell, f"C{len(colors)}")
            steps, losses = zip(*r.losses)
            ax.plot(steps, losses, color=c, alpha=0.7, lw=1, label=label)
        ax.axhline(np.log(4), color="grey", lw=0.8, ls=":")
        ax.set_yscale("log")
        ax.set_xlabel("training step")
        ax.set_ylabel("cross-entropy")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_frame_variance(var, context, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(np.arange(1, len(var) + 1), var, marker=".")
        ax.axvline(context + 0.5, color="k", lw=0.8, ls="--")
        ax.set_xlabel("frame")
        ax.set_ylabel("pixel variance across rollouts")
        return _save(fig, path)
