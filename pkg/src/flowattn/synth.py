"""Synthetic normal-map sequences with exact ground-truth flow.

Flows follow the ``.flo`` convention used throughout the package: entry ``i``
is the displacement taking frame ``i - 1`` pixels to frame ``i``, so
``frame[i-1](x) == frame[i](x + flow[i](x))``. Entry 0 is all zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import normalize_normals


@dataclass(frozen=True)
class ClothSceneParams:
    width: int = 128
    height: int = 128
    frames: int = 8
    wave_amplitude: float = 3.0
    wave_count: float = 2.0
    phase_velocity: float = 1.0
    # (x0, y0, x1, y1), half-open, in pixels
    cloth_region: tuple[int, int, int, int] = (32, 16, 96, 112)
    seed: int = 0

    def validate(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("width and height must be >= 2")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        x0, y0, x1, y1 = self.cloth_region
        if not (0 < x0 < x1 < self.width and 0 < y0 < y1 < self.height):
            raise ValueError(f"cloth_region {self.cloth_region} must lie strictly inside the image")
        if not np.isfinite([self.wave_amplitude, self.wave_count, self.phase_velocity]).all():
            raise ValueError("wave parameters must be finite")

    def region_mask(self):
        x0, y0, x1, y1 = self.cloth_region
        m = np.zeros((self.height, self.width), dtype=bool)
        m[y0:y1, x0:x1] = True
        return m


def height_to_normals(dhdx, dhdy):
    return normalize_normals(np.stack([-dhdx, -dhdy, np.ones_like(dhdx)], axis=-1))


def gen_cloth_sequence(params):
    """Travelling sine wave on a rectangular patch, flat (0, 0, 1) elsewhere.

    Inside the patch the height is ``A * sin(2 pi k (x - v i) / W + phase)``
    with ``v = phase_velocity`` in pixels per frame, so the pattern moves
    ``v`` pixels to the right every frame. The seed only picks ``phase``.
    """
    params.validate()
    w, h = params.width, params.height
    region = params.region_mask()
    phase = np.random.Generator(np.random.Philox(params.seed)).uniform(0.0, 2.0 * np.pi)
    k = 2.0 * np.pi * params.wave_count / w
    xs = np.arange(w, dtype=np.float64)[None, :].repeat(h, axis=0)
    moving = params.wave_amplitude != 0 and params.wave_count != 0 and params.phase_velocity != 0

    normals, flows = [], []
    for i in range(params.frames):
        slope = params.wave_amplitude * k * np.cos(k * (xs - params.phase_velocity * i) + phase)
        slope = np.where(region, slope, 0.0)
        normals.append(height_to_normals(slope, np.zeros_like(slope)))
        f = np.zeros((h, w, 2), dtype=np.float32)
        if i > 0 and moving:
            f[region, 0] = params.phase_velocity
        flows.append(f)
    return normals, flows


def _shift(img, dx, dy):
    """Periodic shift so that ``out(x) = img(x - d)``."""
    if float(dx).is_integer() and float(dy).is_integer():
        return np.roll(img, (int(dy), int(dx)), axis=(0, 1))
    h, w = img.shape[:2]
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    phase = np.exp(-2j * np.pi * (fx * dx + fy * dy))
    spec = np.fft.fft2(img, axes=(0, 1))
    return np.real(np.fft.ifft2(spec * phase[..., None], axes=(0, 1)))


def gen_translation_sequence(base, velocity, frames):
    """Shift ``base`` by ``i * velocity`` (periodically) for ``i < frames``."""
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 3 or base.shape[2] != 3:
        raise ValueError(f"base must be a (H, W, 3) normal map, got {base.shape}")
    if frames < 1:
        raise ValueError("frames must be >= 1")
    vx, vy = (float(c) for c in velocity)
    h, w = base.shape[:2]
    if abs(vx) * (frames - 1) >= 2 * w or abs(vy) * (frames - 1) >= 2 * h:
        raise ValueError("velocity too large: content would wrap more than once")
    normals, flows = [], []
    for i in range(frames):
        shifted = _shift(base, vx * i, vy * i)
        normals.append(normalize_normals(shifted))
        f = np.zeros((h, w, 2), dtype=np.float32)
        if i > 0:
            f[..., 0] = vx
            f[..., 1] = vy
        flows.append(f)
    return normals, flows


def random_normal_map(width, height, seed=0, feature_size=6.0, amplitude=4.0):
    """Periodic, band-limited random height field rendered as normals.

    Useful as a textured base for translation sequences; periodicity keeps
    shifted copies seamless.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    spectrum = np.fft.fft2(noise) * np.exp(-0.5 * (fx**2 + fy**2) * (2 * np.pi * feature_size) ** 2)
    hfield = np.real(np.fft.ifft2(spectrum))
    hfield *= amplitude / (hfield.std() + 1e-12)
    # spectral derivatives stay exactly periodic
    spec_h = np.fft.fft2(hfield)
    dhdx = np.real(np.fft.ifft2(spec_h * 2j * np.pi * fx))
    dhdy = np.real(np.fft.ifft2(spec_h * 2j * np.pi * fy))
    return height_to_normals(dhdx, dhdy)
