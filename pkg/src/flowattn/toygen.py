"""A small deterministic denoising loop with a hooked self-attention layer.

The toy network has no learned weights. Every matrix is drawn from a Philox
stream keyed by the seed, so a seed fully determines the model. One denoising
step for frame ``i`` at step ``k`` is

    h   = LN(x W_x + cond_weight * c W_c + e_k + p)          token features
    h   = h + attn_l(h)   for every layer l before the hook
    A   = attn_hook(h)                                       recorded tensor
    y   = tanh(A W_o + cond_weight * c W_oc)
    x  <- (1 - rate) x + rate * y

with ``x`` the latent (starting from the shared noise), ``LN`` a per-token
layer norm, ``c`` the normal map area-averaged to latent resolution minus the
flat normal (0, 0, 1), ``e_k`` a step embedding and ``p`` a prompt embedding.
Keys are correlated with queries so that attention follows feature
similarity rather than being uniform. Each attention layer lets every query token attend over
key/value tokens average-pooled ``kv_pool`` times per axis. Everything after
the hooked attention acts per token, so the hooked tensor is the only place
where frames and spatial positions interact downstream. Frames are decoded
with a fixed linear map to RGB, bilinearly upsampled and squashed to [0, 1]
with a fixed per-pixel ``0.5 + 0.5 tanh``.
"""

from __future__ import annotations

import enum
import hashlib
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attention import FloatConfig, ProjectionSet, float_recombine, inject_kv, masked_correction, self_attention
from .imagecore import UP_NORMAL
from .flow import FlowParams, compute_mask, estimate_flow
from .warp import resample_flow, resample_mask, resize_field

TENSOR_MAGIC = b"ATNS"
LATENT_CHANNELS = 4
DTYPE = np.float32


class GenerationMode(str, enum.Enum):
    PLAIN = "plain"
    FEAT_INJECT = "feat_inject"
    FEAT_INJECT_MASK = "feat_inject_mask"
    FLOAT = "float"

    @classmethod
    def parse(cls, name):
        aliases = {"featin": cls.FEAT_INJECT, "featin-mask": cls.FEAT_INJECT_MASK}
        if isinstance(name, cls):
            return name
        if name in aliases:
            return aliases[name]
        return cls(name.replace("-", "_"))

    @property
    def injects(self):
        return self is not GenerationMode.PLAIN

    @property
    def corrects(self):
        return self in (GenerationMode.FEAT_INJECT_MASK, GenerationMode.FLOAT)


@dataclass(frozen=True, eq=False)
class ToyDenoiser:
    seed: int
    latent_size: int
    channels: int
    steps: int
    cond_weight: float
    kv_pool: int
    rate: float
    layer_projections: tuple[ProjectionSet, ...]
    w_latent: np.ndarray
    w_cond: np.ndarray
    step_embed: np.ndarray
    w_out: np.ndarray
    w_out_cond: np.ndarray
    w_decode: np.ndarray
    noise: np.ndarray

    @property
    def kv_size(self):
        return max(1, self.latent_size // self.kv_pool)

    def hook_index(self, hook_layer):
        n = len(self.layer_projections)
        if not -n <= hook_layer < n:
            raise ValueError(f"hook_layer {hook_layer} out of range for {n} attention layers")
        return hook_layer % n


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))


def build_toy_denoiser(
    seed=0,
    latent_size=64,
    channels=320,
    steps=20,
    cond_weight=3.0,
    n_layers=1,
    kv_pool=4,
    attn_gain=2.0,
    key_correlation=0.8,
    rate=0.25,
    out_gain=1.0,
    cond_out_gain=0.3,
    decode_gain=1.0,
):
    if latent_size < 1 or channels < 1 or steps < 1 or n_layers < 1 or kv_pool < 1:
        raise ValueError("latent_size, channels, steps, n_layers and kv_pool must be positive")
    if not 0.0 < rate <= 1.0:
        raise ValueError("rate must lie in (0, 1]")
    if not 0.0 <= key_correlation <= 1.0:
        raise ValueError("key_correlation must lie in [0, 1]")
    rng = _rng(seed)

    def gauss(shape, scale):
        return rng.standard_normal(shape) * scale

    c = channels
    projections = []
    for _ in range(n_layers):
        w_q = gauss((c, c), 1.0 / math.sqrt(c))
        w_k = key_correlation * w_q + math.sqrt(1 - key_correlation**2) * gauss((c, c), 1.0 / math.sqrt(c))
        w_v = gauss((c, c), 1.0 / math.sqrt(c))
        projections.append(
            ProjectionSet(w_q=(attn_gain * w_q).astype(DTYPE), w_k=w_k.astype(DTYPE), w_v=w_v.astype(DTYPE))
        )
    arrays = dict(
        w_latent=gauss((LATENT_CHANNELS, c), 1.0 / math.sqrt(LATENT_CHANNELS)),
        w_cond=gauss((3, c), 1.0),
        step_embed=gauss((steps, c), 0.3),
        w_out=gauss((c, LATENT_CHANNELS), out_gain / math.sqrt(c)),
        w_out_cond=gauss((3, LATENT_CHANNELS), cond_out_gain),
        w_decode=gauss((LATENT_CHANNELS, 3), decode_gain / math.sqrt(LATENT_CHANNELS)),
        noise=gauss((latent_size, latent_size, LATENT_CHANNELS), 1.0),
    )
    return ToyDenoiser(
        seed=int(seed),
        latent_size=int(latent_size),
        channels=int(channels),
        steps=int(steps),
        cond_weight=float(cond_weight),
        kv_pool=int(kv_pool),
        rate=float(rate),
        layer_projections=tuple(projections),
        **{k: v.astype(DTYPE) for k, v in arrays.items()},
    )


def prompt_embedding(prompt, channels):
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    return (_rng(seed).standard_normal(channels) * 0.3).astype(DTYPE)


@dataclass
class FrameSequence:
    frames: list
    # attention[i][k]: hooked tensor of frame i at step k, or None if not kept
    attention: list
    masks: list
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)


def _layer_norm(h):
    mu = h.mean(axis=1, keepdims=True)
    sd = h.std(axis=1, keepdims=True)
    return (h - mu) / (sd + 1e-5)


def _pool_tokens(h, size, kv_size):
    grid = h.reshape(size, size, -1)
    return resize_field(grid, kv_size, kv_size).reshape(kv_size * kv_size, -1).astype(DTYPE, copy=False)


def _frame_guidance(normals, flows, mode, cfg, den, flow_params):
    """Attention-resolution (flow, mask) per frame; frame 0 gets (None, None)."""
    size = den.latent_size
    out = [(None, None)]
    for i in range(1, len(normals)):
        if not mode.corrects:
            out.append((None, None))
            continue
        f = flows[i] if flows is not None else estimate_flow(normals[i - 1], normals[i], flow_params)
        f = np.asarray(f, dtype=np.float64)
        if f.shape[:2] != normals[i].shape[:2]:
            raise ValueError(f"flow {i} has size {f.shape[:2]}, normals are {normals[i].shape[:2]}")
        mask = resample_mask(compute_mask(f, cfg.threshold), size, size)
        small = resample_flow(f, size, size)
        if cfg.flip_flow:
            small = -small
        out.append((small.astype(DTYPE), mask))
    return out


def generate_sequence(
    normals,
    prompt,
    denoiser,
    mode="float",
    cfg=None,
    flows=None,
    flow_params=None,
    record="all",
    on_attention=None,
):
    """Generate one frame per normal map with cross-frame attention coupling.

    ``flows[i]`` (image resolution, pointing from frame ``i - 1`` to ``i``) may
    be supplied, e.g. from ``.flo`` files; otherwise flows are estimated from
    consecutive normal maps. ``record`` is ``"all"``, ``"final"`` or ``"none"``
    and controls which hooked tensors are kept in the result;
    ``on_attention(frame, step, tensor)`` sees every one of them regardless.
    """
    mode = GenerationMode.parse(mode)
    cfg = cfg or FloatConfig()
    if record not in ("all", "final", "none"):
        raise ValueError(f"record must be 'all', 'final' or 'none', got {record!r}")
    normals = [np.asarray(n, dtype=np.float64) for n in normals]
    if not normals:
        raise ValueError("empty normal-map sequence")
    shape = normals[0].shape
    if len(shape) != 3 or shape[2] != 3:
        raise ValueError(f"normal maps must be (H, W, 3), got {shape}")
    if any(n.shape != shape for n in normals):
        raise ValueError("all normal maps must have the same size")
    if flows is not None and len(flows) != len(normals):
        raise ValueError("flows must have one entry per normal map (entry 0 is ignored)")

    den = denoiser
    size, steps = den.latent_size, den.steps
    hook = den.hook_index(cfg.hook_layer)
    n_inject = int(math.floor(cfg.inject_fraction * steps + 0.5)) if mode.injects else 0
    prompt_vec = prompt_embedding(prompt, den.channels)
    guidance = _frame_guidance(normals, flows, mode, cfg, den, flow_params or FlowParams())
    img_h, img_w = shape[:2]

    frames, attention, masks = [], [], []
    anchor_kv = prev_kv = prev_attn = None
    for i, normal in enumerate(normals):
        # conditioning is the deviation from a flat surface
        cond = (resize_field(normal, size, size) - UP_NORMAL).reshape(-1, 3).astype(DTYPE)
        cond_in = den.cond_weight * (cond @ den.w_cond) + prompt_vec
        cond_out = den.cond_weight * (cond @ den.w_out_cond)
        flow_small, mask = guidance[i]
        x = den.noise.reshape(-1, LATENT_CHANNELS).copy()
        kv_steps, attn_steps, kept = [], [], []
        for k in range(steps):
            h = _layer_norm(x @ den.w_latent + cond_in + den.step_embed[k])
            for layer in range(hook):
                proj = den.layer_projections[layer]
                h = h + self_attention(h, _pool_tokens(h, size, den.kv_size), proj)
            own_kv = _pool_tokens(h, size, den.kv_size)
            if i > 0 and k < n_inject:
                kv = inject_kv(anchor_kv[k], prev_kv[k])
            else:
                kv = own_kv
            a = self_attention(h, kv, den.layer_projections[hook], grid=(size, size)).astype(DTYPE)
            if i > 0 and mode is GenerationMode.FLOAT:
                a = float_recombine(a, prev_attn[k], flow_small, mask, cfg.alpha)
            elif i > 0 and mode is GenerationMode.FEAT_INJECT_MASK:
                a = masked_correction(a, prev_attn[k], mask)

            if on_attention is not None:
                on_attention(i, k, a)
            if record == "all" or (record == "final" and k == steps - 1):
                kept.append(a)
            else:
                kept.append(None)
            kv_steps.append(own_kv)
            attn_steps.append(a)

            y = np.tanh(a.reshape(-1, den.channels) @ den.w_out + cond_out)
            x = (1 - den.rate) * x + den.rate * y

        rgb = (x @ den.w_decode).reshape(size, size, 3)
        frames.append(0.5 + 0.5 * np.tanh(resize_field(rgb.astype(np.float64), img_w, img_h)))
        attention.append(kept)
        masks.append(mask)
        if i == 0:
            anchor_kv = kv_steps
        prev_kv, prev_attn = kv_steps, attn_steps

    config = {
        "prompt": prompt,
        "mode": mode.value,
        **asdict(cfg),
        "seed": den.seed,
        "latent_size": size,
        "channels": den.channels,
        "steps": steps,
        "cond_weight": den.cond_weight,
        "kv_pool": den.kv_pool,
        "n_layers": len(den.layer_projections),
        "flows": "supplied" if flows is not None else "estimated",
    }
    return FrameSequence(frames=frames, attention=attention, masks=masks, config=config)


def write_tensor(arr, path):
    """Binary dump: magic ``ATNS``, int32 ndim, int32 dims, float32 payload (little-endian)."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack(f"<i{arr.ndim}i", arr.ndim, *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path):
    data = Path(path).read_bytes()
    if data[:4] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not a tensor dump (bad magic)")
    if len(data) < 8:
        raise ValueError(f"{path}: truncated header")
    (ndim,) = struct.unpack("<i", data[4:8])
    if not 0 < ndim <= 8 or len(data) < 8 + 4 * ndim:
        raise ValueError(f"{path}: bad dimension count {ndim}")
    dims = struct.unpack(f"<{ndim}i", data[8 : 8 + 4 * ndim])
    offset = 8 + 4 * ndim
    count = int(np.prod(dims))
    if any(d < 0 for d in dims) or len(data) != offset + 4 * count:
        raise ValueError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).astype(np.float32)
