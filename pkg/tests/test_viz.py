import numpy as np
import pytest

from flowattn.viz import colorize, flow_to_color, pca_first_component, pca_heatmaps, principal_direction


def test_power_iteration_matches_eigh(rng):
    a = rng.standard_normal((6, 6))
    cov = a @ a.T
    v, lam = principal_direction(cov)
    w, vecs = np.linalg.eigh(cov)
    assert lam == pytest.approx(w[-1], rel=1e-8)
    assert abs(abs(v @ vecs[:, -1]) - 1) < 1e-6


def test_rank_one_tensor_recovers_pattern():
    pattern = np.outer(np.linspace(0, 1, 8), np.ones(5))
    direction = np.array([1.0, 2.0, -1.0, 0.5])
    t = pattern[..., None] * direction
    hm = pca_first_component(t)
    assert hm.explained_variance == pytest.approx(1.0)
    assert not hm.flagged
    assert np.allclose(hm.values, pattern)


def test_sign_convention_invariant_to_negation():
    rng = np.random.default_rng(5)
    t = rng.standard_normal((8, 8, 1)) * rng.standard_normal(6) + 0.5 * rng.standard_normal((8, 8, 6))
    a = pca_first_component(t).values
    b = pca_first_component(-t).values
    assert np.allclose(a, b) or np.allclose(a, 1 - b)


def test_degenerate_and_low_signal(rng):
    hm = pca_first_component(np.ones((4, 4, 3)))
    assert hm.degenerate and np.all(hm.values == 0.5)
    noise = pca_first_component(rng.standard_normal((32, 32, 16)))
    assert noise.low_signal and noise.flagged
    with pytest.raises(ValueError):
        pca_first_component(np.ones((4, 4)))


def test_sequence_normalization(rng):
    base = rng.standard_normal((6, 6, 1)) * rng.standard_normal(4)
    maps = pca_heatmaps([base, 2 * base], normalize="sequence")
    assert maps[1].values.max() == pytest.approx(1.0)
    assert maps[0].values.max() < 1.0
    assert all(m.values.shape == (6, 6) for m in pca_heatmaps([base], "frame"))
    with pytest.raises(ValueError):
        pca_heatmaps([base], normalize="global")


def test_colorize_range():
    rgb = colorize(np.linspace(-1, 2, 10).reshape(2, 5))
    assert rgb.shape == (2, 5, 3) and rgb.min() >= 0 and rgb.max() <= 1


def test_flow_to_color():
    f = np.zeros((3, 3, 2))
    assert np.allclose(flow_to_color(f), 1.0)
    f[0, 0] = (1, 0)
    f[0, 1] = (-1, 0)
    rgb = flow_to_color(f, percentile=100)
    assert np.allclose(rgb[0, 0], [1, 0, 0])  # +x is red
    assert np.allclose(rgb[0, 1], [0, 1, 1])  # -x is cyan
    with pytest.raises(ValueError):
        flow_to_color(np.zeros((3, 3)))
