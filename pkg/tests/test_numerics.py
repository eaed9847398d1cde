import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grad_cases import COMPOSITE_CASES, OP_CASES
from helpers import TOL, worst_error
from oadet.numerics import (
    AdamState,
    GruCellParams,
    LinearParams,
    ShapeError,
    Tape,
    adam_update,
    copy_params,
    gru_roll,
    gru_step,
    linear,
    named_arrays,
    relu,
    sigmoid,
    softmax,
)
from oadet.numerics import _kernels_py, kernels
from oadet.numerics import tape as tp

finite = st.floats(-30, 30, allow_nan=False)


@pytest.mark.parametrize("name", sorted({**OP_CASES, **COMPOSITE_CASES}))
def test_gradients_match_finite_differences(name):
    case = {**OP_CASES, **COMPOSITE_CASES}[name]
    for i in range(5):
        assert worst_error(*case(np.random.default_rng([11, i]))) < TOL


@pytest.mark.parametrize("mode", ["learned", "uniform", "none"])
def test_pfa_gradient_every_smoothing_mode(mode):
    from grad_cases import case_pfa

    for i in range(3):
        assert worst_error(*case_pfa(np.random.default_rng([12, i]), mode)) < TOL


def test_gru_hand_value():
    p = GruCellParams.zeros(1, 1)
    p.gate("candidate")[0][...] = 1.0
    h = gru_step(np.array([1.0]), np.array([0.0]), p)
    assert h[0] == pytest.approx(0.5 * np.tanh(1.0), abs=1e-15)
    assert h[0] == pytest.approx(0.380797, abs=1e-6)


def test_gru_step_matches_textbook_equations():
    rng = np.random.default_rng(0)
    D, H = 3, 4
    p = GruCellParams.init(D, H, rng)
    x, h = rng.normal(size=D), rng.normal(size=H)
    Wz, Uz, bz = p.gate("update")
    Wr, Ur, br = p.gate("reset")
    Wn, Un, bn = p.gate("candidate")
    s = lambda v: 1 / (1 + np.exp(-v))
    z = s(Wz @ x + Uz @ h + bz)
    r = s(Wr @ x + Ur @ h + br)
    n = np.tanh(Wn @ x + Un @ (r * h) + bn)
    np.testing.assert_allclose(gru_step(x, h, p), (1 - z) * h + z * n, rtol=1e-13)


def test_gru_roll_equals_repeated_steps():
    rng = np.random.default_rng(1)
    p = GruCellParams.init(2, 3, rng)
    xs = rng.normal(size=(5, 2))
    h = np.zeros(3)
    for t, x in enumerate(xs):
        h = gru_step(x, h, p)
        np.testing.assert_allclose(gru_roll(xs, p)[t], h, rtol=1e-14)


def test_shape_errors():
    p = GruCellParams.zeros(2, 3)
    with pytest.raises(ShapeError):
        gru_step(np.zeros(3), np.zeros(3), p)
    with pytest.raises(ShapeError):
        linear(np.zeros(4), LinearParams.zeros(3, 2))
    with pytest.raises(ShapeError):
        GruCellParams(np.zeros((6, 2)), np.zeros((6, 3)), np.zeros(6))
    t = Tape()
    with pytest.raises(ShapeError):
        t.backward(t.const(np.zeros(2)))


def test_adam_first_step():
    params = {"w": np.array([0.0])}
    state = AdamState(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    adam_update(params, {"w": np.array([1.0])}, state)
    assert params["w"][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
    assert params["w"][0] == pytest.approx(-0.0999999, abs=1e-7)
    assert state.step == 1


def test_adam_rejects_mismatched_gradients():
    with pytest.raises(ShapeError):
        adam_update({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
    with pytest.raises(ShapeError):
        adam_update({"w": np.zeros(2)}, {}, AdamState())


def test_adam_matches_reference_over_several_steps():
    rng = np.random.default_rng(2)
    w = rng.normal(size=4)
    params = {"w": w.copy()}
    state = AdamState(lr=0.01)
    m = v = np.zeros(4)
    for k in range(1, 6):
        g = rng.normal(size=4)
        adam_update(params, {"w": g}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9**k)) / (np.sqrt(v / (1 - 0.999**k)) + 1e-8)
    np.testing.assert_allclose(params["w"], w, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_softmax_sums_to_one(x):
    s = softmax(x)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all((s > 0) & (s < 1)) or x.shape[-1] == 1


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_sigmoid_and_relu_ranges(x):
    s = sigmoid(x)
    assert np.all((s > 0) & (s < 1))
    np.testing.assert_array_equal(relu(x), np.maximum(x, 0))


def test_sigmoid_is_finite_for_extreme_inputs():
    s = sigmoid(np.array([-1e4, 1e4]))
    assert np.all(np.isfinite(s))
    assert np.all((s >= 0) & (s <= 1))


def test_backward_twice_gives_identical_gradients():
    loss, params, grads = OP_CASES["gru_roll"](np.random.default_rng(3))
    t = Tape()
    p = {k: t.param(k, v) for k, v in params.items()}
    out = tp.sum_all(tp.gru_roll(tp.linear(p["x"], p["w_in"], p["bias"]), p["h0"], p["w_rec"]))
    g1 = t.backward(out)
    g2 = t.backward(out)
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


def test_param_leaves_are_shared():
    t = Tape()
    w = np.array([2.0])
    a = t.param("w", w)
    b = t.param("w", w)
    assert a is b
    g = t.backward(tp.sum_all(a * b))
    assert g["w"][0] == pytest.approx(4.0)


def test_named_arrays_are_views():
    p = GruCellParams.init(2, 3, np.random.default_rng(0))
    named_arrays(p, "g.")["g.bias"][...] = 7.0
    assert np.all(p.bias == 7.0)
    q = copy_params(p)
    q.bias[...] = 0.0
    assert np.all(p.bias == 7.0)


def test_init_is_uniform_with_zero_bias():
    rng = np.random.default_rng(0)
    p = GruCellParams.init(16, 64, rng)
    assert np.all(p.bias == 0)
    assert np.abs(p.w_in).max() <= 1 / np.sqrt(16)
    assert np.abs(p.w_rec).max() <= 1 / np.sqrt(64)
    lin = LinearParams.init(9, 4, rng)
    assert np.abs(lin.weight).max() <= 1 / 3 and np.all(lin.bias == 0)


@pytest.mark.skipif(kernels.BACKEND != "native", reason="compiled extension not built")
def test_native_kernels_match_numpy_reference():
    from oadet.numerics import _kernels_ext

    rng = np.random.default_rng(4)
    T, B, D, H = 6, 3, 4, 5
    w_in, w_rec = rng.normal(size=(3 * H, D)), 0.5 * rng.normal(size=(3 * H, H))
    b, dec_w, dec_b = rng.normal(size=3 * H), rng.normal(size=(D, H)), rng.normal(size=D)
    xp, h0 = rng.normal(size=(T, B, 3 * H)), rng.normal(size=(B, H))
    out = {}
    for k in (_kernels_py, _kernels_ext):
        hs, gates = k.gru_forward(xp, h0, w_rec)
        back = k.gru_backward(np.cos(hs), h0, hs, gates, w_rec)
        ghs, gxs, gg = k.gru_generate(h0, w_in, b, w_rec, dec_w, dec_b, T)
        gback = k.gru_generate_backward(np.sin(ghs), h0, ghs, gxs, gg, w_in, w_rec, dec_w)
        out[k] = (hs, *back, ghs, gxs, *gback)
    for a, c in zip(out[_kernels_py], out[_kernels_ext]):
        np.testing.assert_allclose(a, c, rtol=1e-11, atol=1e-12)


def test_kernels_accept_readonly_inputs():
    rng = np.random.default_rng(5)
    w_rec = rng.normal(size=(6, 2))
    xp = np.broadcast_to(rng.normal(size=6), (1, 3, 6))
    h0 = np.zeros((3, 2))
    hs, _ = kernels.gru_forward(xp, h0, w_rec)
    assert hs.shape == (1, 3, 2)
