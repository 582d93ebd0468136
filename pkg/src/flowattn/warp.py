"""Backward bilinear warping and resolution adaptation.

Flow fields are ``(H, W, 2)`` arrays of ``(u, v)`` displacements in pixels,
``u`` along columns (x) and ``v`` along rows (y).
"""

from __future__ import annotations

import numpy as np

MASK_TIE_EPS = 1e-9


def _check_flow(f, shape=None):
    f = np.asarray(f)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ValueError(f"flow must have shape (H, W, 2), got {f.shape}")
    if shape is not None and f.shape[:2] != tuple(shape):
        raise ValueError(f"flow size {f.shape[:2]} does not match field size {tuple(shape)}")
    return f


def bilinear_warp(field, flow):
    """Sample ``field`` at ``(x + u, y + v)`` for every output pixel.

    ``field`` may be ``(H, W)`` or ``(H, W, C)``; all channels share the flow.
    Sample positions outside the grid are clamped to the border. The result
    keeps the dtype of ``field``.
    """
    field = np.asarray(field)
    if field.ndim not in (2, 3):
        raise ValueError(f"field must be (H, W) or (H, W, C), got {field.shape}")
    h, w = field.shape[:2]
    flow = _check_flow(flow, (h, w))
    dtype = field.dtype if np.issubdtype(field.dtype, np.floating) else np.float64

    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(xs + flow[..., 0].astype(np.float64), 0.0, w - 1)
    sy = np.clip(ys + flow[..., 1].astype(np.float64), 0.0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (sx - x0).astype(dtype)
    wy = (sy - y0).astype(dtype)
    if field.ndim == 3:
        wx = wx[..., None]
        wy = wy[..., None]

    f = field.astype(dtype, copy=False)
    top = f[y0, x0] * (1 - wx) + f[y0, x1] * wx
    bottom = f[y1, x0] * (1 - wx) + f[y1, x1] * wx
    return top * (1 - wy) + bottom * wy


def _area_matrix(src, dst):
    """(dst, src) matrix averaging source cells over each destination cell."""
    edges = np.arange(dst + 1) * (src / dst)
    m = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = edges[i], edges[i + 1]
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), src)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                m[i, j] = overlap
        m[i] /= m[i].sum()
    return m


def _bilinear_matrix(src, dst):
    """(dst, src) matrix for half-pixel-centred linear interpolation."""
    pos = np.clip((np.arange(dst) + 0.5) * (src / dst) - 0.5, 0.0, src - 1)
    j0 = np.floor(pos).astype(int)
    j1 = np.minimum(j0 + 1, src - 1)
    t = pos - j0
    m = np.zeros((dst, src))
    rows = np.arange(dst)
    np.add.at(m, (rows, j0), 1 - t)
    np.add.at(m, (rows, j1), t)
    return m


def resize_matrix(src, dst):
    """Area averaging when shrinking an axis, linear interpolation when growing it."""
    if src < 1 or dst < 1:
        raise ValueError("sizes must be >= 1")
    if dst == src:
        return np.eye(src)
    return _area_matrix(src, dst) if dst < src else _bilinear_matrix(src, dst)


def resize_field(field, target_w, target_h):
    """Resize an ``(H, W)`` or ``(H, W, C)`` array, separably per axis."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dimensions must be >= 1")
    field = np.asarray(field)
    h, w = field.shape[:2]
    rh = resize_matrix(h, target_h).astype(field.dtype if np.issubdtype(field.dtype, np.floating) else np.float64)
    rw = resize_matrix(w, target_w).astype(rh.dtype)
    return np.einsum("ih,hw...,jw->ij...", rh, field, rw, optimize=True)


def resample_flow(flow, target_w, target_h):
    """Resize a flow field and rescale it to target-pixel units."""
    flow = _check_flow(flow)
    h, w = flow.shape[:2]
    if (target_w, target_h) == (w, h):
        return flow.copy()
    out = resize_field(flow, target_w, target_h)
    out[..., 0] *= target_w / w
    out[..., 1] *= target_h / h
    return out.astype(flow.dtype, copy=False)


def resample_mask(mask, target_w, target_h):
    """Resize a binary mask; cells at least half covered by motion become 1."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    cover = resize_field(mask.astype(np.float64), target_w, target_h)
    return (cover >= 0.5 - MASK_TIE_EPS).astype(np.uint8)
