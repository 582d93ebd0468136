"""Raster conventions and lossless 8-bit image I/O.

Arrays are used directly as the raster types:

* image: float array of shape ``(H, W)`` or ``(H, W, C)``, values in ``[0, 1]``
* normal map: float array of shape ``(H, W, 3)`` holding unit vectors

Normals are stored in files with the usual tangent-space encoding
``rgb = 255 * (n + 1) / 2``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

UP_NORMAL = np.array([0.0, 0.0, 1.0])


class ImageIOError(Exception):
    """Base class for image loading/saving failures."""


class MissingImageError(ImageIOError, FileNotFoundError):
    pass


class ChannelCountError(ImageIOError, ValueError):
    pass


class CorruptImageError(ImageIOError, ValueError):
    pass


def as_image(data, name="image"):
    """Validate and return ``data`` as a float64 raster of 1, 2 or 3 channels."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"{name} must be (H, W) or (H, W, C), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1")
    if arr.ndim == 3 and arr.shape[2] not in (1, 2, 3):
        raise ValueError(f"{name} must have 1, 2 or 3 channels, got {arr.shape[2]}")
    return arr


def normalize_normals(n):
    """Scale every vector to unit length; zero vectors become (0, 0, 1)."""
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    out = np.where(norm > 0, n / np.where(norm > 0, norm, 1.0), UP_NORMAL)
    return out


def decode_normals(rgb):
    """8-bit encoded RGB -> unit normals."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return normalize_normals(2.0 * rgb / 255.0 - 1.0)


def encode_normals(n):
    """Unit normals -> float encoded RGB in [0, 255] (not quantized)."""
    return np.clip((np.asarray(n, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)


def _open_8bit(path):
    path = Path(path)
    if not path.is_file():
        raise MissingImageError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImageError(f"corrupt image {path}: {exc}") from exc
    if arr.dtype != np.uint8:
        raise CorruptImageError(f"{path}: expected 8-bit samples, got {arr.dtype}")
    return mode, arr


def load_image(path):
    """Load an 8-bit grayscale or RGB image as floats in [0, 1].

    Grayscale files come back as ``(H, W)``, RGB as ``(H, W, 3)``.
    """
    mode, arr = _open_8bit(path)
    if mode not in ("L", "RGB"):
        raise ChannelCountError(f"{path}: unsupported image mode {mode!r}, expected L or RGB")
    return arr.astype(np.float64) / 255.0


def load_normal_image(path):
    mode, arr = _open_8bit(path)
    if mode != "RGB":
        raise ChannelCountError(f"{path}: normal maps must be 3-channel RGB, got mode {mode!r}")
    return decode_normals(arr)


def to_uint8(img):
    img = as_image(img)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path):
    """Write a [0, 1] image as a lossless 8-bit PNG (values are clamped)."""
    img = as_image(img)
    if img.ndim == 3:
        if img.shape[2] == 1:
            img = img[:, :, 0]
        elif img.shape[2] != 3:
            raise ValueError(f"can only save 1- or 3-channel images, got {img.shape[2]}")
    data = to_uint8(img)
    path = Path(path)
    parent = path.parent
    if str(parent) and not parent.exists():
        raise ImageIOError(f"output directory does not exist: {parent}")
    try:
        PILImage.fromarray(data).save(path, format="PNG")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def save_normal_image(normals, path):
    save_image(encode_normals(normals) / 255.0, path)


def list_numbered_images(directory, suffix=".png"):
    """Sorted image paths in ``directory`` (numbered frames sort naturally)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingImageError(f"no such directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == suffix and p.is_file())


def load_normal_sequence(directory):
    paths = list_numbered_images(directory)
    if not paths:
        raise MissingImageError(f"no .png normal maps in {directory}")
    return [load_normal_image(p) for p in paths]
