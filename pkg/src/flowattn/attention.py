"""Self-attention, cross-frame key/value injection and flow-guided recombination.

Conventions: feature blocks are ``(tokens, dim)`` matrices, attention tensors
are ``(H, W, C)`` grids whose ``H * W`` locations are the query tokens in
row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .warp import bilinear_warp

DEFAULT_ALPHA = 0.4
DEFAULT_INJECT_FRACTION = 0.5
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ProjectionSet:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        if self.w_q.ndim != 2 or self.w_k.ndim != 2 or self.w_v.ndim != 2:
            raise ValueError("projections must be 2-D matrices")
        if not (self.w_q.shape[0] == self.w_k.shape[0] == self.w_v.shape[0]):
            raise ValueError("projections must share the input dimension")
        if self.w_q.shape[1] != self.w_k.shape[1]:
            raise ValueError("query and key projections must have the same width")

    @property
    def in_dim(self):
        return self.w_q.shape[0]

    @property
    def out_dim(self):
        return self.w_v.shape[1]


@dataclass(frozen=True)
class FloatConfig:
    """Knobs of the flow-guided attention manipulation.

    ``hook_layer`` indexes the denoiser's attention layers (negative values
    count from the end). ``flip_flow`` negates the frame-pair flow before
    warping: pair flows point from frame ``i - 1`` to frame ``i`` while the
    backward warp needs the displacement from ``i`` back to ``i - 1``.
    """

    alpha: float = DEFAULT_ALPHA
    threshold: float = DEFAULT_THRESHOLD
    inject_fraction: float = DEFAULT_INJECT_FRACTION
    hook_layer: int = -1
    flip_flow: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.inject_fraction <= 1.0:
            raise ValueError(f"inject_fraction must lie in [0, 1], got {self.inject_fraction}")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


def softmax(logits, axis=-1):
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention_weights(q_in, kv_in, proj):
    q = q_in @ proj.w_q
    k = kv_in @ proj.w_k
    d = proj.w_q.shape[1]
    return softmax(q @ k.T / np.sqrt(d))


def self_attention(q_in, kv_in, proj, grid=None):
    """``softmax(Q K^T / sqrt(d)) V`` with ``Q`` from ``q_in`` and ``K, V`` from ``kv_in``.

    Returns ``(tokens, out_dim)``, or ``(H, W, out_dim)`` when ``grid=(H, W)``
    is given.
    """
    q_in = np.asarray(q_in)
    kv_in = np.asarray(kv_in)
    if q_in.ndim != 2 or kv_in.ndim != 2:
        raise ValueError("feature blocks must be (tokens, dim) matrices")
    if q_in.shape[1] != proj.in_dim or kv_in.shape[1] != proj.in_dim:
        raise ValueError(
            f"feature dims {q_in.shape[1]}/{kv_in.shape[1]} do not match projection input {proj.in_dim}"
        )
    if kv_in.shape[0] == 0:
        raise ValueError("key/value block has no tokens")
    out = attention_weights(q_in, kv_in, proj) @ (kv_in @ proj.w_v)
    if grid is not None:
        h, w = grid
        if h * w != q_in.shape[0]:
            raise ValueError(f"grid {grid} does not hold {q_in.shape[0]} tokens")
        out = out.reshape(h, w, -1)
    return out


def inject_kv(h_anchor, h_prev):
    """Concatenate anchor-frame and previous-frame features along the token axis."""
    h_anchor = np.asarray(h_anchor)
    h_prev = np.asarray(h_prev)
    if h_anchor.ndim != 2 or h_prev.ndim != 2:
        raise ValueError("feature blocks must be (tokens, dim) matrices")
    if h_anchor.shape[1] != h_prev.shape[1]:
        raise ValueError(f"feature dims differ: {h_anchor.shape[1]} vs {h_prev.shape[1]}")
    return np.concatenate([h_anchor, h_prev], axis=0)


def _check_pair(a_cur, a_prev, mask):
    if a_cur.shape != a_prev.shape or a_cur.ndim != 3:
        raise ValueError(f"attention tensors must share an (H, W, C) shape: {a_cur.shape} vs {a_prev.shape}")
    if mask.shape != a_cur.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match attention grid {a_cur.shape[:2]}")


def masked_correction(a_cur, a_prev, mask):
    """Keep ``a_cur`` where the mask is 1 and fall back to ``a_prev`` where it is 0."""
    a_cur = np.asarray(a_cur)
    a_prev = np.asarray(a_prev)
    mask = np.asarray(mask)
    _check_pair(a_cur, a_prev, mask)
    m = mask.astype(a_cur.dtype)[..., None]
    return (1 - m) * a_prev + m * a_cur


def float_recombine(a_cur, a_prev, flow, mask, alpha):
    """Blend the current map with the flow-warped previous map, then mask.

    ``flow`` and ``mask`` must already be at attention resolution; ``flow`` is
    passed to the backward warp as-is. All channels are processed at once.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    a_cur = np.asarray(a_cur)
    a_prev = np.asarray(a_prev)
    mask = np.asarray(mask)
    _check_pair(a_cur, a_prev, mask)
    blended = alpha * a_cur + (1 - alpha) * bilinear_warp(a_prev, flow)
    return masked_correction(blended.astype(a_cur.dtype, copy=False), a_prev, mask)
