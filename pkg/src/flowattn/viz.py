"""Attention heatmaps (first principal component) and flow colouring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import hsv_to_rgb

POWER_TOL = 1e-8
POWER_MAX_ITER = 1000
POWER_SEED = 0


@dataclass
class Heatmap:
    values: np.ndarray  # (H, W) in [0, 1]
    explained_variance: float
    degenerate: bool = False
    low_signal: bool = False
    colormap: str = "viridis"

    @property
    def flagged(self):
        return self.degenerate or self.low_signal


def _samples(tensor):
    a = np.asarray(tensor, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"attention tensor must be (H, W, C), got shape {a.shape}")
    if a.shape[2] < 2:
        raise ValueError("need at least 2 channels for PCA")
    return a.reshape(-1, a.shape[2]), a.shape[:2]


def principal_direction(cov, tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=POWER_SEED):
    """Dominant eigenvector of a symmetric PSD matrix by power iteration."""
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(cov.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return v, 0.0
        w /= norm
        done = np.linalg.norm(w - v) <= tol
        v = w
        if done:
            break
    return v, float(v @ cov @ v)


def pca_projection(tensor):
    """Per-location projection onto the first principal component.

    Returns ``(projection (H, W), explained_variance_ratio, low_signal)``, or
    ``(None, 0.0, False)`` when all locations are equal. The sign is chosen so
    that the projection has a non-negative spatial mean.
    """
    x, grid = _samples(tensor)
    n, c = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / n
    total = float(np.trace(cov))
    if total <= 1e-12 * max(1.0, float(np.abs(x).max()) ** 2):
        return None, 0.0, False
    v, lam = principal_direction(cov)
    proj = x @ v
    m = proj.mean()
    if m < 0 or (m == 0 and v[np.argmax(np.abs(v))] < 0):
        proj = -proj
    ratio = lam / total
    # largest eigenvalue expected from isotropic noise (Marchenko-Pastur edge)
    noise_edge = (total / c) * (1 + math.sqrt(c / n)) ** 2
    return proj.reshape(grid), ratio, lam <= 2.0 * noise_edge


def pca_first_component(tensor):
    proj, ratio, low = pca_projection(tensor)
    if proj is None:
        grid = np.asarray(tensor).shape[:2]
        return Heatmap(np.full(grid, 0.5), 0.0, degenerate=True)
    lo, hi = proj.min(), proj.max()
    values = (proj - lo) / (hi - lo) if hi > lo else np.full(proj.shape, 0.5)
    return Heatmap(values, ratio, low_signal=low)


def pca_heatmaps(tensors, normalize="frame"):
    """Heatmaps for a sequence; ``normalize="sequence"`` shares one min/max."""
    if normalize not in ("frame", "sequence"):
        raise ValueError("normalize must be 'frame' or 'sequence'")
    maps = [pca_first_component(t) for t in tensors]
    if normalize == "frame":
        return maps
    projs = [pca_projection(t) for t in tensors]
    valid = [p[0] for p in projs if p[0] is not None]
    if not valid:
        return maps
    lo = min(p.min() for p in valid)
    hi = max(p.max() for p in valid)
    out = []
    for hm, (proj, ratio, low) in zip(maps, projs):
        if proj is None or hi == lo:
            out.append(hm)
        else:
            out.append(Heatmap((proj - lo) / (hi - lo), ratio, low_signal=low))
    return out


def colorize(values, colormap="viridis"):
    """Map a [0, 1] array to RGB with a matplotlib colormap."""
    return colormaps[colormap](np.clip(values, 0.0, 1.0))[..., :3]


def flow_to_color(flow, percentile=95.0):
    """Polar flow colouring: hue is direction, saturation is relative magnitude.

    Magnitudes are normalized by the given percentile of the field and capped
    at 1. Zero flow is white.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    scale = np.percentile(mag, percentile)
    sat = np.clip(mag / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(mag)
    hue = np.mod(np.arctan2(v, u) / (2 * np.pi), 1.0)
    hsv = np.stack([hue, sat, np.ones_like(mag)], axis=-1)
    return hsv_to_rgb(hsv)
