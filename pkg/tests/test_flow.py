import struct

import numpy as np
import pytest
from scipy import ndimage
from hypothesis import given, settings
from hypothesis import strategies as st

from flowattn.flow import (
    FLO_MAGIC,
    FloError,
    FlowParams,
    compute_mask,
    endpoint_error,
    estimate_flow,
    flow_magnitude,
    read_flo,
    write_flo,
)
from flowattn.synth import ClothSceneParams, gen_cloth_sequence, gen_translation_sequence, random_normal_map


def test_identical_inputs_give_zero_flow():
    n = random_normal_map(32, 32, seed=1)
    f = estimate_flow(n, n)
    assert f.dtype == np.float32 and f.shape == (32, 32, 2)
    assert not f.any()


def test_subpixel_translation():
    base = random_normal_map(48, 48, seed=2)
    normals, truth = gen_translation_sequence(base, (0.5, -0.25), 2)
    f = estimate_flow(normals[0], normals[1])
    assert endpoint_error(f, truth[1]).mean() < 0.1


def test_cloth_flow_and_mask_follow_motion():
    p = ClothSceneParams(frames=2)
    normals, truth = gen_cloth_sequence(p)
    f = estimate_flow(normals[0], normals[1])
    region = p.region_mask()
    inner = np.zeros_like(region)
    inner[24:104, 40:88] = True
    assert np.abs(f[inner, 0] - 1.0).mean() < 0.2
    # the estimator's window spreads motion a few pixels past the patch edge
    beyond6 = ~ndimage.binary_dilation(region, iterations=6)
    beyond10 = ~ndimage.binary_dilation(region, iterations=10)
    assert flow_magnitude(f)[beyond10].max() < 0.1
    mask = compute_mask(f, 0.5)
    assert mask[inner].mean() > 0.9 and mask[beyond6].sum() == 0


def test_grayscale_input_and_size_mismatch():
    a = np.random.default_rng(0).random((16, 16))
    assert estimate_flow(a, a).shape == (16, 16, 2)
    with pytest.raises(ValueError):
        estimate_flow(a, a[:8])
    with pytest.raises(ValueError):
        FlowParams(pyramid_levels=0)


def test_magnitude_and_epe():
    f = np.array([[[3.0, 4.0]]])
    assert flow_magnitude(f)[0, 0] == 5.0
    assert endpoint_error(f, np.zeros_like(f))[0, 0] == 5.0
    with pytest.raises(ValueError):
        compute_mask(f, -1)


def test_flo_reference_bytes(tmp_path):
    # magic 202021.25 little-endian is b"PIEH"
    assert struct.pack("<f", FLO_MAGIC) == b"PIEH"
    data = b"PIEH" + struct.pack("<ii", 1, 1) + struct.pack("<ff", 0.25, 7.0)
    (tmp_path / "r.flo").write_bytes(data)
    assert read_flo(tmp_path / "r.flo").tolist() == [[[0.25, 7.0]]]
    write_flo(np.array([[[0.25, 7.0]]], dtype=np.float32), tmp_path / "w.flo")
    assert (tmp_path / "w.flo").read_bytes() == data


def test_flo_layout_is_row_major_interleaved(tmp_path):
    f = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    write_flo(f, tmp_path / "a.flo")
    raw = (tmp_path / "a.flo").read_bytes()
    assert struct.unpack("<ii", raw[4:12]) == (3, 2)  # width, height
    assert np.array_equal(np.frombuffer(raw[12:], "<f4"), np.arange(12))


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 6), w=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_flo_roundtrip_property(h, w, seed, tmp_path_factory):
    f = (np.random.default_rng(seed).standard_normal((h, w, 2)) * 100).astype(np.float32)
    path = tmp_path_factory.mktemp("flo") / "f.flo"
    write_flo(f, path)
    assert read_flo(path).tobytes() == f.tobytes()


@pytest.mark.parametrize(
    "payload, message",
    [
        (b"PIE", "truncated header"),
        (b"XXXX" + struct.pack("<ii", 1, 1) + bytes(8), "bad magic"),
        (b"PIEH" + struct.pack("<ii", 0, 1), "dimension"),
        (b"PIEH" + struct.pack("<ii", 1 << 15, 1 << 15), "dimension"),
        (b"PIEH" + struct.pack("<ii", 2, 2) + bytes(8), "truncated payload"),
        (b"PIEH" + struct.pack("<ii", 1, 1) + bytes(12), "trailing"),
    ],
)
def test_flo_errors(tmp_path, payload, message):
    (tmp_path / "x.flo").write_bytes(payload)
    with pytest.raises(FloError, match=message):
        read_flo(tmp_path / "x.flo")


def test_write_flo_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_flo(np.zeros((2, 2, 3)), tmp_path / "a.flo")
    with pytest.raises(ValueError):
        write_flo(np.full((1, 1, 2), np.nan), tmp_path / "a.flo")
