import numpy as np
import pytest
from PIL import Image

from flowattn.imagecore import (
    ChannelCountError,
    CorruptImageError,
    ImageIOError,
    MissingImageError,
    decode_normals,
    encode_normals,
    list_numbered_images,
    load_image,
    load_normal_image,
    load_normal_sequence,
    normalize_normals,
    save_image,
    save_normal_image,
)


def test_decode_flat_normal():
    n = decode_normals(np.array([[[127.5, 127.5, 255.0]]]))
    assert np.allclose(n, [0, 0, 1])


def test_decode_renormalizes_and_handles_zero():
    n = decode_normals(np.array([[[255, 127.5, 127.5], [127.5, 127.5, 127.5]]]))
    assert np.allclose(n[0, 0], [1, 0, 0])
    assert np.array_equal(n[0, 1], [0, 0, 1])
    assert np.allclose(np.linalg.norm(normalize_normals(np.random.default_rng(0).normal(size=(5, 5, 3))), axis=-1), 1)


def test_encode_decode_roundtrip():
    n = normalize_normals(np.random.default_rng(1).normal(size=(4, 6, 3)))
    assert np.allclose(decode_normals(encode_normals(n)), n)


def test_png_roundtrip_is_lossless_for_8bit(tmp_path):
    img = np.random.default_rng(2).integers(0, 256, (9, 7, 3)) / 255.0
    save_image(img, tmp_path / "a.png")
    assert np.array_equal(load_image(tmp_path / "a.png"), img)
    gray = img[..., 0]
    save_image(gray, tmp_path / "g.png")
    assert load_image(tmp_path / "g.png").shape == (9, 7)


def test_save_clamps(tmp_path):
    save_image(np.array([[-1.0, 2.0]]), tmp_path / "c.png")
    assert np.array_equal(load_image(tmp_path / "c.png"), [[0.0, 1.0]])


def test_normal_image_roundtrip_within_quantization(tmp_path):
    n = normalize_normals(np.random.default_rng(3).normal(size=(8, 8, 3)) + [0, 0, 2])
    save_normal_image(n, tmp_path / "n.png")
    back = load_normal_image(tmp_path / "n.png")
    assert np.abs(back - n).max() < 0.01


def test_errors(tmp_path):
    with pytest.raises(MissingImageError):
        load_image(tmp_path / "missing.png")
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(CorruptImageError):
        load_image(tmp_path / "bad.png")
    Image.fromarray(np.zeros((4, 4), np.uint8)).save(tmp_path / "gray.png")
    with pytest.raises(ChannelCountError):
        load_normal_image(tmp_path / "gray.png")
    Image.fromarray(np.zeros((4, 4, 4), np.uint8)).save(tmp_path / "rgba.png")
    with pytest.raises(ChannelCountError):
        load_image(tmp_path / "rgba.png")
    with pytest.raises(ImageIOError):
        save_image(np.zeros((2, 2)), tmp_path / "nodir" / "x.png")
    with pytest.raises(ValueError):
        save_image(np.zeros((2, 2, 4)), tmp_path / "x.png")


def test_sequence_order(tmp_path):
    for i in (2, 0, 10, 1):
        save_normal_image(np.tile([0.0, 0.0, 1.0], (3, 3, 1)), tmp_path / f"{i:04d}.png")
    (tmp_path / "notes.txt").write_text("x")
    names = [p.name for p in list_numbered_images(tmp_path)]
    assert names == ["0000.png", "0001.png", "0002.png", "0010.png"]
    assert len(load_normal_sequence(tmp_path)) == 4
    with pytest.raises(MissingImageError):
        load_normal_sequence(tmp_path / "nope")
