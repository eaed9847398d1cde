import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oadet.data import write_labels, write_predictions
from oadet.metrics import (
    average_precision,
    calibrated_ap,
    calibrated_precision,
    centered_window_smoothing,
    evaluate,
    evaluate_files,
    evaluate_many,
)


def brute_ap(scores, labels, calibrated=False):
    """Rank by descending score, ties by frame index, one frame at a time."""
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    P = sum(1 for i in range(n) if labels[i])
    N = n - P
    total = 0.0
    tp = fp = 0
    for i in order:
        if labels[i]:
            tp += 1
            if calibrated:
                total += 1.0 if N == 0 else tp / (tp + fp * P / N)
            else:
                total += tp / (tp + fp)
        else:
            fp += 1
    return total / P


def test_calibrated_precision_example():
    assert calibrated_precision(3, 2, 2) == 0.75


def test_ap_worked_example():
    # ranks: pos, neg, pos -> (1 + 2/3) / 2
    assert average_precision([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-15)


def test_ap_ties_break_by_frame_index():
    # equal scores: frame 0 (negative) ranks first
    assert average_precision([0.5, 0.5], [0, 1]) == pytest.approx(0.5)
    assert average_precision([0.5, 0.5], [1, 0]) == pytest.approx(1.0)


def test_ap_and_cap_match_brute_force():
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 60))
        labels = (rng.random(n) < rng.uniform(0.1, 0.7)).astype(int)
        labels[rng.integers(n)] = 1
        scores = np.round(rng.random(n), 1) if k % 3 == 0 else rng.random(n)  # some ties
        for cal, fn in ((False, average_precision), (True, calibrated_ap)):
            worst = max(worst, abs(fn(scores, labels) - brute_ap(list(scores), list(labels), cal)))
    assert worst < 1e-10


def test_cap_equals_ap_when_classes_balance():
    rng = np.random.default_rng(1)
    labels = np.array([1] * 10 + [0] * 10)
    rng.shuffle(labels)
    s = rng.random(20)
    assert calibrated_ap(s, labels) == pytest.approx(average_precision(s, labels), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ap_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    labels = rng.random(n) < 0.4
    labels[0] = True
    s = rng.random(n)
    for fn in (average_precision, calibrated_ap):
        assert fn(np.exp(3 * s) - 7, labels) == pytest.approx(fn(s, labels), abs=1e-14)
        assert 0 < fn(s, labels) <= 1


def test_perfect_ranking_gives_one():
    labels = np.array([0, 1, 1, 0, 1])
    assert average_precision(labels.astype(float), labels) == 1.0
    assert calibrated_ap(labels.astype(float), labels) == 1.0


def test_errors():
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        calibrated_precision(1, 1, 0)
    with pytest.raises(ValueError):
        average_precision([0.1], [1, 0])


def test_evaluate_skips_background_and_absent_classes():
    labels = np.array([0, 1, 1, 0, 2, 2, 0])
    K = 3
    probs = np.eye(K + 1)[labels]
    res = evaluate(probs, labels, K)
    assert res.skipped == [3]
    assert set(res.ap) == {1, 2}
    assert res.mAP == 1.0 and res.mcAP == 1.0
    assert res.positives == {1: 2, 2: 2, 3: 0}


def test_evaluate_binary_matrix_labels():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 4, size=30)
    p = rng.random((30, 4))
    a = evaluate(p, y, 3)
    b = evaluate(p, np.eye(4)[y], 3)
    assert a.ap == b.ap


def test_evaluate_many_pools_frames():
    rng = np.random.default_rng(3)
    pairs = [(rng.random((10, 3)), rng.integers(0, 3, size=10)) for _ in range(3)]
    pooled = evaluate(np.concatenate([p for p, _ in pairs]), np.concatenate([y for _, y in pairs]), 2)
    assert evaluate_many(pairs, 2).ap == pooled.ap


def test_result_json_and_table():
    labels = np.array([0, 1, 2, 1])
    res = evaluate(np.eye(3)[labels] * 0.9, labels, 2)
    d = json.loads(res.to_json())
    assert d["mAP"] == 1.0 and d["ap"] == {"1": 1.0, "2": 1.0}
    table = res.to_table()
    assert "mean" in table.splitlines()[-1]


def test_evaluate_files_round_trip(tmp_path):
    labels = np.array([0, 1, 1, 3, 0, 2])
    probs = np.eye(4)[labels]
    write_labels(tmp_path / "y.labels", labels, 3)
    write_predictions(tmp_path / "p.pred", probs, 3)
    res = evaluate_files(tmp_path / "p.pred", tmp_path / "y.labels", 3)
    assert res.mAP == 1.0
    with pytest.raises(ValueError):
        evaluate_files(tmp_path / "p.pred", tmp_path / "y.labels", 5)


def test_centered_window_smoothing():
    p = np.array([[0.0], [3.0], [6.0], [9.0]])
    np.testing.assert_allclose(centered_window_smoothing(p, 1)[:, 0], [1.5, 3.0, 6.0, 7.5])
    np.testing.assert_array_equal(centered_window_smoothing(p, 0), p)
