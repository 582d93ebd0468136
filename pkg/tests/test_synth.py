import numpy as np
import pytest

from flowattn.flow import endpoint_error, estimate_flow
from flowattn.synth import ClothSceneParams, gen_cloth_sequence, gen_translation_sequence, random_normal_map
from flowattn.warp import bilinear_warp


def test_cloth_background_is_flat_and_static():
    p = ClothSceneParams(frames=4)
    normals, flows = gen_cloth_sequence(p)
    bg = ~p.region_mask()
    for n in normals:
        assert np.array_equal(n[bg], np.tile([0.0, 0.0, 1.0], (bg.sum(), 1)))
        assert np.allclose(np.linalg.norm(n, axis=-1), 1)
    assert not flows[0].any()
    assert np.array_equal(flows[1][p.region_mask(), 0], np.full(p.region_mask().sum(), 1.0))
    assert not flows[1][bg].any()


def test_cloth_flow_convention_matches_content():
    # frame[i-1](x) == frame[i](x + flow(x)) inside the patch
    p = ClothSceneParams(frames=2, phase_velocity=2.0)
    normals, flows = gen_cloth_sequence(p)
    warped = bilinear_warp(normals[1], flows[1])
    inner = np.zeros_like(p.region_mask())
    inner[16:112, 32:94] = True
    assert np.abs(warped[inner] - normals[0][inner]).max() < 1e-12


def test_seed_changes_phase_only():
    a, _ = gen_cloth_sequence(ClothSceneParams(frames=2, seed=0))
    b, _ = gen_cloth_sequence(ClothSceneParams(frames=2, seed=1))
    c, _ = gen_cloth_sequence(ClothSceneParams(frames=2, seed=0))
    assert not np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], c[1])


def test_static_cloth_has_zero_flow():
    _, flows = gen_cloth_sequence(ClothSceneParams(frames=3, phase_velocity=0.0))
    assert not any(f.any() for f in flows)


def test_param_validation():
    with pytest.raises(ValueError):
        gen_cloth_sequence(ClothSceneParams(frames=1))
    with pytest.raises(ValueError):
        gen_cloth_sequence(ClothSceneParams(cloth_region=(0, 0, 200, 10)))


def test_translation_truth_and_shift():
    base = random_normal_map(32, 24, seed=4)
    normals, flows = gen_translation_sequence(base, (2, 1), 3)
    assert np.allclose(normals[2], np.roll(base, (2, 4), axis=(0, 1)), rtol=0, atol=1e-14)
    assert np.all(flows[1][..., 0] == 2) and np.all(flows[1][..., 1] == 1)
    with pytest.raises(ValueError):
        gen_translation_sequence(base, (40, 0), 3)


def test_fractional_translation_is_estimable():
    base = random_normal_map(48, 48, seed=5)
    normals, flows = gen_translation_sequence(base, (1.5, 0.0), 2)
    assert endpoint_error(estimate_flow(normals[0], normals[1]), flows[1]).mean() < 0.1


def test_random_map_is_periodic_and_deterministic():
    a = random_normal_map(32, 32, seed=7)
    assert np.array_equal(a, random_normal_map(32, 32, seed=7))
    assert np.allclose(np.linalg.norm(a, axis=-1), 1)
    # wrap-around differences are no larger than interior ones
    d_wrap = np.abs(a[:, 0] - a[:, -1]).max()
    d_int = np.abs(np.diff(a, axis=1)).max()
    assert d_wrap <= d_int + 1e-12
