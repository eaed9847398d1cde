import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oadet.anticipation import forward_pass
from oadet.data import read_predictions, write_features
from oadet.model import Model, ModelDims
from oadet.numerics import ShapeError, gru_roll
from oadet.pfa import aggregate, classify, head, smooth_weights
from oadet.streaming import Ensemble, StreamConfig, StreamState, predict_sequence, run_offline_file, stream_step

DIMS = ModelDims(D=3, H=5, H_p=4, K=2, cls_hidden=3, wgen_hidden=2)


def model(seed=0, scale=0.5):
    m = Model.init(DIMS, np.random.default_rng(seed))
    rng = np.random.default_rng([seed, 9])
    for v in m.tensors().values():
        v += scale * rng.normal(size=v.shape)  # nonzero biases too
    return m


def reference(m, x, cfg):
    """One plain stream per offset, averaged over streams that have started."""
    states = [StreamState.initial(m, o) for o in cfg.offsets()]
    out = []
    for t, frame in enumerate(x):
        preds = [stream_step(s, frame, m, cfg) for s in states if t >= s.start_offset]
        out.append(np.mean(preds, axis=0))
    return np.array(out)


def brute_force(m, x, cfg):
    """Recompute every stream's output from scratch using whole-sequence functions."""
    T = len(x)
    out = np.zeros((T, DIMS.K + 1))
    count = np.zeros(T)
    for o in cfg.offsets():
        for start in range(o, T, cfg.l_m):
            seg = x[start:start + cfg.l_m]
            prev = np.full(DIMS.K + 1, 0.5)
            for i in range(len(seg)):
                past = seg[: i + 1]
                fut = forward_pass(past, cfg.l_g, m.ant).generated
                p_c = classify(np.concatenate([past, fut]), m.pfa)
                if cfg.smoothing == "learned":
                    prev = aggregate(p_c, prev, smooth_weights(seg[i], m.pfa))
                elif cfg.smoothing == "uniform":
                    prev = aggregate(p_c, prev, [0.5, 0.5])
                else:
                    prev = p_c
                out[start + i] += prev
                count[start + i] += 1
    return out / count[:, None]


@pytest.mark.parametrize("n,l_g,smoothing", [(1, 0, "none"), (2, 3, "learned"), (4, 2, "uniform"), (8, 1, "learned")])
def test_ensemble_matches_reference(n, l_g, smoothing):
    m = model(1)
    cfg = StreamConfig(l_m=8, l_g=l_g, n=n, smoothing=smoothing)
    x = np.random.default_rng(2).normal(size=(30, 3))
    fast = predict_sequence(m, x, cfg)
    np.testing.assert_allclose(fast, reference(m, x, cfg), rtol=0, atol=1e-12)


@pytest.mark.parametrize("smoothing", ["learned", "uniform", "none"])
def test_two_streams_match_brute_force(smoothing):
    m = model(3)
    cfg = StreamConfig(l_m=6, l_g=2, n=2, smoothing=smoothing)
    x = np.random.default_rng(4).normal(size=(20, 3))
    np.testing.assert_allclose(predict_sequence(m, x, cfg), brute_force(m, x, cfg), rtol=0, atol=1e-12)


def test_single_stream_without_anticipation_is_recurrent_classifier():
    m = model(5)
    cfg = StreamConfig(l_m=50, l_g=0, n=1, smoothing="none")
    x = np.random.default_rng(6).normal(size=(12, 3))
    h = gru_roll(x, m.pfa.agg_gru)
    np.testing.assert_allclose(predict_sequence(m, x, cfg), head(h, m.pfa), atol=1e-13)


def test_first_frame_of_each_stream_blends_with_half():
    m = model(7)
    cfg = StreamConfig(l_m=4, l_g=1, n=1, smoothing="uniform")
    x = np.random.default_rng(8).normal(size=(9, 3))
    out = predict_sequence(m, x, cfg)
    for start in (0, 4, 8):
        fut = forward_pass(x[start:start + 1], 1, m.ant).generated
        raw = classify(np.concatenate([x[start:start + 1], fut]), m.pfa)
        np.testing.assert_allclose(out[start], 0.5 * raw + 0.25, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_predictions_never_depend_on_later_frames(seed, t):
    rng = np.random.default_rng(seed)
    m = model(seed % 5)
    cfg = StreamConfig(l_m=8, l_g=2, n=4)
    x = rng.normal(size=(26, 3))
    y = x.copy()
    y[t:] = rng.normal(size=(26 - t, 3)) * 10
    a, b = predict_sequence(m, x, cfg), predict_sequence(m, y, cfg)
    assert np.array_equal(a[:t], b[:t])


def test_outputs_are_probabilities_and_reset_works():
    m = model(9)
    e = Ensemble(m, StreamConfig(l_m=8, l_g=2, n=4))
    x = np.random.default_rng(10).normal(size=(10, 3))
    first = np.array([e.step(f) for f in x])
    assert np.all((first > 0) & (first < 1))
    e.reset()
    np.testing.assert_array_equal(np.array([e.step(f) for f in x]), first)
    with pytest.raises(ShapeError):
        e.step(np.zeros(4))


def test_config_offsets_and_validation():
    assert StreamConfig(l_m=32, n=4).offsets() == [0, 8, 16, 24]
    assert StreamConfig(l_m=32, n=1).offsets() == [0]
    for bad in ({"n": 3}, {"n": 0}, {"l_g": -1}, {"smoothing": "x"}, {"l_m": 0}):
        with pytest.raises(ValueError):
            StreamConfig(**bad).validate()


def test_offline_file_matches_in_memory(tmp_path):
    m = model(11)
    cfg = StreamConfig(l_m=8, l_g=2, n=2)
    x = np.random.default_rng(12).normal(size=(17, 3))
    write_features(tmp_path / "f", x, DIMS.K)
    assert run_offline_file(tmp_path / "f", m, cfg, tmp_path / "p") == 17
    probs, header = read_predictions(tmp_path / "p")
    np.testing.assert_array_equal(probs, predict_sequence(m, x, cfg))
    assert header["K"] == 2
    write_features(tmp_path / "g", np.zeros((3, 4)), DIMS.K)
    with pytest.raises(ShapeError):
        run_offline_file(tmp_path / "g", m, cfg, tmp_path / "q")
    assert not (tmp_path / "q").exists()
    write_features(tmp_path / "h", np.zeros((3, 3)), 5)
    with pytest.raises(ShapeError):
        run_offline_file(tmp_path / "h", m, cfg, tmp_path / "r")
