"""Matplotlib figures written next to the text reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .viz import flow_to_color  # noqa: E402

DPI = 100


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_ablation(alphas, scores, path, label="Self-SSIM"):
    """Score against alpha, raw and min-max normalized."""
    alphas = np.asarray(alphas, dtype=float)
    scores = np.asarray(scores, dtype=float)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3))
    ax0.plot(alphas, scores, "o-", color="k")
    ax0.set_xlabel(r"$\alpha$")
    ax0.set_ylabel(label)
    span = scores.max() - scores.min()
    norm = (scores - scores.min()) / span if span > 0 else np.zeros_like(scores)
    ax1.plot(alphas, norm, "s-", color="tab:blue")
    ax1.set_xlabel(r"$\alpha$")
    ax1.set_ylabel(f"{label} (min-max)")
    ax1.set_ylim(-0.05, 1.05)
    best = alphas[int(np.argmax(scores))]
    for ax in (ax0, ax1):
        ax.axvline(best, color="0.6", ls="--", lw=0.8)
    return _finish(fig, path)


def plot_attention_strip(heatmaps, path, flows=None, titles=None):
    """One column per frame: attention heatmap, and the incoming flow above it if given."""
    n = len(heatmaps)
    rows = 2 if flows is not None else 1
    fig, axes = plt.subplots(rows, n, figsize=(2.2 * n, 2.2 * rows), squeeze=False)
    for j, hm in enumerate(heatmaps):
        ax = axes[-1, j]
        ax.imshow(hm.values, cmap=hm.colormap, vmin=0, vmax=1)
        ax.set_title(titles[j] if titles else f"frame {j}", fontsize=9)
        if hm.flagged:
            ax.set_xlabel("low signal" if hm.low_signal else "degenerate", fontsize=8, color="tab:red")
        if flows is not None:
            f = flows[j]
            if f is None:
                axes[0, j].set_visible(False)
            else:
                axes[0, j].imshow(flow_to_color(f))
    for ax in axes.flat:
        ax.set_xticks([])
        ax.set_yticks([])
    return _finish(fig, path)


def plot_frames(frames, path, max_frames=8):
    frames = list(frames)[:max_frames]
    fig, axes = plt.subplots(1, len(frames), figsize=(2.2 * len(frames), 2.4), squeeze=False)
    for j, (ax, img) in enumerate(zip(axes[0], frames)):
        ax.imshow(np.clip(img, 0, 1))
        ax.set_title(f"{j:04d}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    return _finish(fig, path)
