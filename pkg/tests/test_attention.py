import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowattn.attention import (
    FloatConfig,
    ProjectionSet,
    attention_weights,
    float_recombine,
    inject_kv,
    masked_correction,
    self_attention,
    softmax,
)
from flowattn.warp import bilinear_warp


def _proj(rng, din, d, dv):
    return ProjectionSet(rng.standard_normal((din, d)), rng.standard_normal((din, d)), rng.standard_normal((din, dv)))


def test_softmax_stable_for_large_logits():
    p = softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.allclose(p, [[0.5, 0.5, 0.0]])


def test_single_key_returns_its_value(rng):
    proj = _proj(rng, 5, 4, 3)
    kv = rng.standard_normal((1, 5))
    out = self_attention(rng.standard_normal((6, 5)), kv, proj)
    assert np.allclose(out, np.tile(kv @ proj.w_v, (6, 1)))


def test_scale_uses_query_width():
    # two keys whose scores differ by sqrt(d) give weights 1/(1+e) and e/(1+e)
    d = 4
    w = np.eye(d)
    proj = ProjectionSet(w, w, w)
    q = np.array([[1.0, 1, 1, 1]])
    kv = np.array([[0.0, 0, 0, 0], [0.5, 0.5, 0.5, 0.5]])
    p = attention_weights(q, kv, proj)
    assert np.allclose(p, [[1 / (1 + np.e), np.e / (1 + np.e)]])


def test_grid_output_and_validation(rng):
    proj = _proj(rng, 3, 2, 5)
    out = self_attention(rng.standard_normal((6, 3)), rng.standard_normal((4, 3)), proj, grid=(2, 3))
    assert out.shape == (2, 3, 5)
    with pytest.raises(ValueError):
        self_attention(rng.standard_normal((6, 3)), rng.standard_normal((4, 3)), proj, grid=(2, 2))
    with pytest.raises(ValueError):
        self_attention(rng.standard_normal((6, 2)), rng.standard_normal((4, 3)), proj)
    with pytest.raises(ValueError):
        self_attention(rng.standard_normal((6, 3)), np.zeros((0, 3)), proj)
    with pytest.raises(ValueError):
        ProjectionSet(np.zeros((3, 2)), np.zeros((3, 4)), np.zeros((3, 2)))


def test_inject_kv_concatenates_tokens(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    kv = inject_kv(a, b)
    assert kv.shape == (8, 4)
    assert np.array_equal(kv[:3], a) and np.array_equal(kv[3:], b)
    with pytest.raises(ValueError):
        inject_kv(a, rng.standard_normal((5, 3)))


def test_injected_attention_over_duplicate_block_is_unchanged(rng):
    # attending over [h; h] equals attending over h
    proj = _proj(rng, 4, 4, 4)
    h = rng.standard_normal((6, 4))
    assert np.allclose(self_attention(h, inject_kv(h, h), proj), self_attention(h, h, proj))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_recombine_matches_formula(alpha, seed):
    rng = np.random.default_rng(seed)
    cur, prev = rng.standard_normal((2, 6, 5, 3))
    flow = rng.uniform(-2, 2, (6, 5, 2))
    mask = rng.integers(0, 2, (6, 5))
    out = float_recombine(cur, prev, flow, mask, alpha)
    blend = alpha * cur + (1 - alpha) * bilinear_warp(prev, flow)
    want = np.where(mask[..., None] == 1, blend, prev)
    assert np.allclose(out, want, atol=1e-12)


def test_masked_correction_selects(rng):
    cur, prev = rng.standard_normal((2, 3, 3, 2))
    mask = np.array([[1, 0, 1], [0, 0, 0], [1, 1, 1]])
    out = masked_correction(cur, prev, mask)
    assert np.array_equal(out[mask == 1], cur[mask == 1])
    assert np.array_equal(out[mask == 0], prev[mask == 0])
    with pytest.raises(ValueError):
        masked_correction(cur, prev, mask[:2])


def test_config_validation():
    assert FloatConfig().alpha == 0.4 and FloatConfig().threshold == 0.5
    for bad in ({"alpha": 1.5}, {"inject_fraction": -0.1}, {"threshold": -1}):
        with pytest.raises(ValueError):
            FloatConfig(**bad)
    with pytest.raises(ValueError):
        float_recombine(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)), np.zeros((2, 2, 2)), np.ones((2, 2)), -0.1)
