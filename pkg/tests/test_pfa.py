import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oadet.numerics import ShapeError, sigmoid
from oadet.pfa import (
    PfaParams,
    SmoothState,
    aggregate,
    blend,
    classify,
    pfa_loss,
    pfa_step,
    smooth_weights,
    uniform_smoothing_baseline,
    window_smoothing_baseline,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_zero_params_give_half():
    p = PfaParams.zeros(3, 4, 5, cls_hidden=6, wgen_hidden=2)
    np.testing.assert_array_equal(classify(np.ones((4, 3)), p), np.full(5, 0.5))
    np.testing.assert_array_equal(smooth_weights(np.ones(3), p), [0.5, 0.5])


def test_classify_scalar_oracle():
    p = PfaParams.zeros(1, 1, 2, cls_hidden=1, wgen_hidden=1)
    # update gate open, candidate driven by the input
    p.agg_gru.bias[0] = 0.4
    p.agg_gru.w_in[2, 0] = 0.8
    p.agg_gru.w_rec[2, 0] = -0.3
    p.cls1.weight[0, 0], p.cls1.bias[0] = 2.0, 0.1
    p.cls2.weight[:, 0] = [1.5, -0.7]
    p.cls2.bias[:] = [-0.2, 0.3]
    xs = [0.6, -0.4, 1.2]
    s = lambda v: 1 / (1 + math.exp(-v))
    h = 0.0
    for x in xs:
        z = s(0.4)
        r = s(0.0)
        n = math.tanh(0.8 * x - 0.3 * r * h)
        h = (1 - z) * h + z * n
    a = max(0.0, 2.0 * h + 0.1)
    want = [s(1.5 * a - 0.2), s(-0.7 * a + 0.3)]
    np.testing.assert_allclose(classify(np.array(xs)[:, None], p), want, rtol=1e-13)


def test_smooth_weights_scalar_oracle():
    p = PfaParams.zeros(1, 1, 2, cls_hidden=1, wgen_hidden=1)
    p.wgen_f.weight[0, 0], p.wgen_f.bias[0] = 1.5, -0.5
    p.wgen_g.weight[:, 0] = [0.8, -1.2]
    p.wgen_g.bias[:] = [0.1, 0.0]
    x = 2.0
    a = max(0.0, 1.5 * x - 0.5)
    l0, l1 = 0.8 * a + 0.1, -1.2 * a
    w0 = math.exp(l0) / (math.exp(l0) + math.exp(l1))
    np.testing.assert_allclose(smooth_weights(np.array([x]), p), [w0, 1 - w0], rtol=1e-14)


def test_aggregate_examples():
    p_c = np.array([0.2, 0.8])
    prev = np.array([0.6, 0.4])
    np.testing.assert_allclose(aggregate(p_c, prev, [0.5, 0.5]), [0.4, 0.6], atol=1e-15)
    np.testing.assert_array_equal(aggregate(p_c, prev, [1.0, 0.0]), p_c)
    np.testing.assert_allclose(aggregate(p_c, SmoothState(prev), [0.5, 0.5]), [0.4, 0.6], atol=1e-15)
    np.testing.assert_allclose(uniform_smoothing_baseline(p_c, prev), [0.4, 0.6], atol=1e-15)
    with pytest.raises(ShapeError):
        aggregate(p_c, np.zeros(3), [0.5, 0.5])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(unit, unit), min_size=1, max_size=6), unit)
def test_aggregate_is_convex(pairs, w0):
    p_c = np.array([a for a, _ in pairs])
    prev = np.array([b for _, b in pairs])
    out = aggregate(p_c, prev, [w0, 1 - w0])
    lo, hi = np.minimum(p_c, prev), np.maximum(p_c, prev)
    assert np.all(out >= lo - 1e-15) and np.all(out <= hi + 1e-15)
    assert np.all((out >= 0) & (out <= 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_smooth_weights_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    p = PfaParams.init(4, 3, 5, rng, cls_hidden=3, wgen_hidden=6)
    w = smooth_weights(rng.normal(size=(7, 4)) * 3, p)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(w >= 0)


def test_pfa_loss_values():
    C = 7
    for y in (np.eye(C)[0], np.eye(C)[3], np.zeros(C)):
        assert abs(pfa_loss(np.full(C, 0.5), y) - math.log(2)) < 1e-12
    y = np.eye(C)[2]
    assert pfa_loss(y, y) < 1e-11
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.99, size=C)
    brute = 0.0
    for i in range(C):
        brute -= y[i] * math.log(p[i]) + (1 - y[i]) * math.log(1 - p[i])
    assert pfa_loss(p, y) == pytest.approx(brute / C, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.lists(unit, min_size=2, max_size=6), st.integers(0, 5))
def test_pfa_loss_nonnegative(ps, k):
    p = np.array(ps)
    y = np.zeros(len(ps))
    y[k % len(ps)] = 1
    assert pfa_loss(p, y) >= 0
    assert np.isfinite(pfa_loss(p, y))


def test_window_baseline():
    h = np.array([[0.1, 0.9], [0.3, 0.5], [0.8, 0.2], [0.4, 0.4]])
    np.testing.assert_array_equal(window_smoothing_baseline(h, 1), h[-1])
    np.testing.assert_allclose(window_smoothing_baseline(h, 3), [(0.3 + 0.8 + 0.4) / 3, (0.5 + 0.2 + 0.4) / 3])
    np.testing.assert_allclose(window_smoothing_baseline(h[:2], 3), [0.2, 0.7])
    np.testing.assert_allclose(window_smoothing_baseline(np.full((5, 3), 0.25), 3), 0.25)
    with pytest.raises(ValueError):
        window_smoothing_baseline(h, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_fixed_weight_smoothing_contracts_total_variation(seed, w0):
    rng = np.random.default_rng(seed)
    raw = rng.random((20, 3))
    out = np.empty_like(raw)
    prev = raw[0]
    for t, p_c in enumerate(raw):
        prev = aggregate(p_c, prev, [w0, 1 - w0]) if t else p_c
        out[t] = prev
    tv = lambda s: np.abs(np.diff(s, axis=0)).sum()
    assert tv(out) <= tv(raw) + 1e-12


def test_blend_modes():
    p = PfaParams.zeros(2, 2, 3, cls_hidden=2, wgen_hidden=2)
    p_c, prev = np.array([0.9, 0.1, 0.5]), np.array([0.5, 0.5, 0.5])
    x = np.ones(2)
    np.testing.assert_array_equal(blend(p_c, prev, x, p, "none"), p_c)
    np.testing.assert_allclose(blend(p_c, prev, x, p, "uniform"), [0.7, 0.3, 0.5])
    np.testing.assert_allclose(blend(p_c, prev, x, p, "learned"), [0.7, 0.3, 0.5])
    with pytest.raises(ValueError):
        blend(p_c, prev, x, p, "median")


def test_pfa_step_forward_matches_plain_functions():
    rng = np.random.default_rng(1)
    p = PfaParams.init(3, 4, 5, rng, cls_hidden=6, wgen_hidden=3)
    feats = rng.normal(size=(6, 2, 3))
    prev = rng.uniform(size=(2, 5))
    y = np.eye(5)[[1, 4]]
    r = pfa_step(feats, feats[3], prev, y, p, "learned")
    raw = classify(feats, p)
    want = aggregate(raw, prev, smooth_weights(feats[3], p))
    np.testing.assert_allclose(r.raw, raw, rtol=1e-13)
    np.testing.assert_allclose(r.probs, want, rtol=1e-13)
    assert r.loss == pytest.approx(np.mean([pfa_loss(want[b], y[b]) for b in range(2)]), rel=1e-12)


def test_pfa_step_leaves_inputs_untouched_by_gradient():
    rng = np.random.default_rng(2)
    p = PfaParams.init(3, 4, 5, rng, cls_hidden=6, wgen_hidden=3)
    r = pfa_step(rng.normal(size=(4, 1, 3)), rng.normal(size=(1, 3)), np.full((1, 5), 0.5), np.eye(5)[[0]], p)
    assert set(r.grads) == {
        "agg_gru.w_in", "agg_gru.w_rec", "agg_gru.bias",
        "cls1.weight", "cls1.bias", "cls2.weight", "cls2.bias",
        "wgen_f.weight", "wgen_f.bias", "wgen_g.weight", "wgen_g.bias",
    }


def test_classify_output_in_open_interval():
    rng = np.random.default_rng(3)
    p = PfaParams.init(3, 4, 5, rng, cls_hidden=6, wgen_hidden=3)
    out = classify(rng.normal(size=(9, 3)) * 5, p)
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ShapeError):
        classify(np.zeros((2, 4)), p)
    with pytest.raises(ValueError):
        classify(np.zeros((0, 3)), p)


def test_sigmoid_saturation_is_clamped_in_loss():
    y = np.array([1.0, 0.0])
    p = sigmoid(np.array([-800.0, 800.0]))  # exactly 0 and 1
    loss = pfa_loss(p, y)
    assert np.isfinite(loss)
    assert loss == pytest.approx(-math.log(1e-12), rel=1e-4)
