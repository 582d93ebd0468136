"""Optical flow between normal maps, motion masks and Middlebury ``.flo`` files.

The estimator is a coarse-to-fine iterative Lucas-Kanade. Every pyramid level
runs a few Gauss-Newton updates: the second map is warped towards the first
with the current flow, the residual is projected onto Gaussian-windowed image
gradients summed over the three normal components, and the resulting 2x2
systems are solved per pixel. ``smoothness_weight`` is a Tikhonov prior on the
total flow, which drives it to zero wherever the maps carry no texture (flat
background), including regions that only received flow from coarser levels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .warp import bilinear_warp, resample_flow

FLO_MAGIC = 202021.25
FLO_MAX_PIXELS = 1 << 28
MIN_LEVEL_SIZE = 8
MAX_STEP = 1.0


class FloError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    iterations_per_level: int = 8
    smoothness_weight: float = 1e-5
    window_sigma: float = 2.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if self.smoothness_weight < 0:
            raise ValueError("smoothness_weight must be >= 0")
        if self.window_sigma <= 0:
            raise ValueError("window_sigma must be > 0")


def _as_channels(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) input, got {img.shape}")
    return img


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape[:2]) // 2 < MIN_LEVEL_SIZE:
            break
        blurred = ndimage.gaussian_filter(prev, sigma=(1.0, 1.0, 0), mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr


def _lk_level(a, b, flow, params):
    sigma = (params.window_sigma, params.window_sigma)
    gy, gx = np.gradient(a, axis=(0, 1))
    win = lambda x: ndimage.gaussian_filter(x, sigma=sigma, mode="nearest")  # noqa: E731
    gxx = win((gx * gx).sum(axis=2)) + params.smoothness_weight
    gxy = win((gx * gy).sum(axis=2))
    gyy = win((gy * gy).sum(axis=2)) + params.smoothness_weight
    det = gxx * gyy - gxy * gxy
    ok = det > 1e-18
    safe_det = np.where(ok, det, 1.0)

    h, w = a.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    lam = params.smoothness_weight
    for _ in range(params.iterations_per_level):
        it = bilinear_warp(b, flow) - a
        # correspondences that leave the grid carry no information
        sx = xs + flow[..., 0]
        sy = ys + flow[..., 1]
        inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        it = it * inside[..., None]
        # the prior pulls the total flow (not just the update) towards zero
        bx = win((gx * it).sum(axis=2)) + lam * flow[..., 0]
        by = win((gy * it).sum(axis=2)) + lam * flow[..., 1]
        du = np.where(ok, -(gyy * bx - gxy * by) / safe_det, 0.0)
        dv = np.where(ok, -(gxx * by - gxy * bx) / safe_det, 0.0)
        step = np.hypot(du, dv)
        scale = np.minimum(1.0, MAX_STEP / np.maximum(step, 1e-12))
        flow = flow + np.stack([du * scale, dv * scale], axis=-1)
    return flow


def estimate_flow(a, b, params=None):
    """Flow from ``a`` to ``b``: ``a(x) ~ b(x + flow(x))``.

    Inputs are normal maps (or any ``(H, W[, C])`` rasters); the three normal
    components are used as if they were colour channels. Returns a float32
    ``(H, W, 2)`` field.
    """
    params = params or FlowParams()
    a = _as_channels(a)
    b = _as_channels(b)
    if a.shape != b.shape:
        raise ValueError(f"input size mismatch: {a.shape} vs {b.shape}")

    pa = _pyramid(a, params.pyramid_levels)
    pb = _pyramid(b, params.pyramid_levels)
    flow = None
    for la, lb in zip(reversed(pa), reversed(pb)):
        h, w = la.shape[:2]
        flow = np.zeros((h, w, 2)) if flow is None else resample_flow(flow, w, h)
        flow = _lk_level(la, lb, flow, params)
    return flow.astype(np.float32)


def flow_magnitude(flow):
    flow = np.asarray(flow, dtype=np.float64)
    return np.hypot(flow[..., 0], flow[..., 1])


def compute_mask(flow, threshold):
    """1 where the flow magnitude reaches ``threshold`` (inclusive), else 0."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return (flow_magnitude(flow) >= threshold).astype(np.uint8)


def endpoint_error(flow, truth):
    """Per-pixel Euclidean distance between two flow fields."""
    d = np.asarray(flow, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return np.hypot(d[..., 0], d[..., 1])


def write_flo(flow, path):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must have shape (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow contains non-finite values")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path):
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FloError(f"{path}: truncated header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise FloError(f"{path}: bad magic {magic!r}")
    if w < 1 or h < 1 or w * h > FLO_MAX_PIXELS:
        raise FloError(f"{path}: dimension overflow ({w} x {h})")
    expected = 12 + 8 * w * h
    if len(data) < expected:
        raise FloError(f"{path}: truncated payload ({len(data)} of {expected} bytes)")
    if len(data) > expected:
        raise FloError(f"{path}: {len(data) - expected} unexpected trailing bytes")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float32)
