"""Image-quality and sequence-coherence metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .flow import FlowParams, estimate_flow
from .imagecore import encode_normals

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_K = 10
NORMAL_PEAK = 255.0
DEFAULT_FLOW_PEAK = 20.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b):
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr_from_rmse(err, peak):
    if peak <= 0:
        raise ValueError("peak must be > 0")
    if err == 0:
        return math.inf
    return 20.0 * math.log10(peak / err)


def psnr(a, b, peak=255.0):
    """PSNR in dB; ``inf`` for identical inputs."""
    return psnr_from_rmse(rmse(a, b), peak)


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return g


def _valid_filter(x, g):
    """Separable 'valid' correlation of every channel with the 1-D window ``g``."""
    n = len(g)
    h, w = x.shape[:2]
    rows = sum(g[j] * x[j : h - n + 1 + j] for j in range(n))
    return sum(g[j] * rows[:, j : w - n + 1 + j] for j in range(n))


def ssim_map(a, b, peak=1.0):
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise ValueError(f"ssim needs images of at least {SSIM_WIN}x{SSIM_WIN}, got {a.shape[:2]}")
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    g = gaussian_window()
    mu_a = _valid_filter(a, g)
    mu_b = _valid_filter(b, g)
    var_a = _valid_filter(a * a, g) - mu_a**2
    var_b = _valid_filter(b * b, g) - mu_b**2
    cov = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, peak=1.0):
    """Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) and channels."""
    return float(np.mean(ssim_map(a, b, peak)))


def anchor_indices(n, k):
    if n < 1:
        raise ValueError("empty sequence")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if k == 1:
        return [0]
    return sorted({int(math.floor(j * (n - 1) / (k - 1) + 0.5)) for j in range(k)})


def self_ssim_pairs(n, k):
    """(frame, anchor) index pairs averaged by :func:`self_ssim`.

    Every non-anchor frame is compared with every anchor. When all frames are
    anchors, each unordered pair of distinct anchors is used instead.
    """
    anchors = anchor_indices(n, k)
    others = [i for i in range(n) if i not in anchors]
    if others:
        return [(i, a) for a in anchors for i in others]
    return [(anchors[p], anchors[q]) for p in range(len(anchors)) for q in range(p + 1, len(anchors))]


def self_ssim(frames, k=DEFAULT_K, peak=1.0):
    frames = list(getattr(frames, "frames", frames))
    n = len(frames)
    if n == 0:
        raise ValueError("empty sequence")
    k = min(k, n)
    pairs = self_ssim_pairs(n, k)
    if not pairs:
        return 1.0
    return float(np.mean([ssim(frames[i], frames[a], peak) for i, a in pairs]))


@dataclass
class MetricReport:
    n_rmse: float | None = None
    n_psnr: float | None = None
    f_rmse: float | None = None
    f_psnr: float | None = None
    self_ssim: float | None = None
    # filled from external tools only
    self_lpips: float | None = None
    clip_semantic: float | None = None
    clip_consistency: float | None = None
    k: int | None = None
    normal_peak: float = NORMAL_PEAK
    flow_peak: float = DEFAULT_FLOW_PEAK

    def to_dict(self):
        return asdict(self)

    def merge(self, values):
        for key, value in values.items():
            if key not in self.__dataclass_fields__:
                raise KeyError(f"unknown metric {key!r}")
            setattr(self, key, None if value is None else float(value))
        return self

    def to_text(self):
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key}={'' if value is None else value}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return json.dumps({k: enc(v) for k, v in self.to_dict().items()}, indent=2, sort_keys=True)


def normal_condition_metrics(input_normals, estimated_normals, flow_params=None, flow_peak=DEFAULT_FLOW_PEAK):
    """Per-frame-averaged RMSE/PSNR between normal sequences and between their flows.

    Normals are compared in encoded 8-bit units (peak 255), flows in pixels
    against ``flow_peak``. Inputs are not renormalized.
    """
    a = [np.asarray(n, dtype=np.float64) for n in input_normals]
    b = [np.asarray(n, dtype=np.float64) for n in estimated_normals]
    if len(a) != len(b):
        raise ValueError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty sequence")
    if any(x.shape != y.shape for x, y in zip(a, b)):
        raise ValueError("frame sizes differ")

    n_err = [rmse(encode_normals(x), encode_normals(y)) for x, y in zip(a, b)]
    report = MetricReport(flow_peak=flow_peak)
    report.n_rmse = float(np.mean(n_err))
    report.n_psnr = float(np.mean([psnr_from_rmse(e, NORMAL_PEAK) for e in n_err]))
    if len(a) > 1:
        params = flow_params or FlowParams()
        f_err = []
        for i in range(1, len(a)):
            fa = estimate_flow(a[i - 1], a[i], params)
            fb = estimate_flow(b[i - 1], b[i], params)
            f_err.append(rmse(fa, fb))
        report.f_rmse = float(np.mean(f_err))
        report.f_psnr = float(np.mean([psnr_from_rmse(e, flow_peak) for e in f_err]))
    return report
