import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fishnet import (
    Prediction,
    accuracy,
    confusion_matrix,
    logloss_gradient,
    multiclass_logloss,
)


def one_hot(labels, m):
    out = np.zeros((len(labels), m))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def test_perfect_predictions_hit_clipping_floor():
    labels = np.array([0, 3, 7])
    loss = multiclass_logloss(one_hot(labels, 8), labels)
    assert 0.0 <= loss <= 1e-14


def test_uniform_eight_class_predictor_gives_ln8():
    probs = np.full((10, 8), 1 / 8)
    loss = multiclass_logloss(probs, np.arange(10) % 8)
    assert np.isclose(loss, math.log(8), rtol=0, atol=1e-12)
    assert np.isclose(loss, 2.079442, rtol=0, atol=1e-6)


def test_single_sample_half_probability_gives_ln2():
    probs = np.array([[0.5, 0.25, 0.25]])
    loss = multiclass_logloss(probs, np.array([0]))
    assert np.isclose(loss, math.log(2), rtol=0, atol=1e-12)
    assert np.isclose(loss, 0.693147, rtol=0, atol=1e-6)


def test_empty_prediction_set_rejected():
    with pytest.raises(ValueError):
        multiclass_logloss(np.zeros((0, 8)), np.zeros(0, dtype=int))


def test_certain_wrong_prediction_stays_finite():
    probs = np.array([[1.0, 0.0]])
    loss = multiclass_logloss(probs, np.array([1]))
    assert math.isfinite(loss)
    assert np.isclose(loss, -math.log(1e-15), rtol=1e-12)


def test_prediction_row_sum_validation():
    with pytest.raises(ValueError):
        Prediction(np.array([[0.9, 0.3]]), np.array([0]))
    with pytest.raises(ValueError):
        Prediction(np.array([[0.5, 0.5]]), np.array([2]))


def test_prediction_container_and_argmax():
    pred = Prediction(np.array([[0.2, 0.8], [0.7, 0.3]]), np.array([1, 1]))
    assert np.array_equal(pred.predicted_labels(), [1, 0])
    assert np.isclose(
        multiclass_logloss(pred, None), -(math.log(0.8) + math.log(0.3)) / 2
    )


@given(
    st.integers(0, 2**31 - 1),
    st.integers(1, 20),
    st.integers(2, 10),
)
@settings(max_examples=50, deadline=None)
def test_logloss_nonnegative_and_uniform_closed_form(seed, n, m):
    rng = np.random.default_rng(seed)
    raw = rng.random((n, m)) + 1e-3
    probs = raw / raw.sum(axis=1, keepdims=True)
    labels = rng.integers(0, m, n)
    assert multiclass_logloss(probs, labels) >= 0.0
    uniform = np.full((n, m), 1 / m)
    assert np.isclose(
        multiclass_logloss(uniform, labels), math.log(m), rtol=0, atol=1e-12
    )


@given(st.floats(0.01, 0.97), st.floats(0.01, 0.02))
@settings(max_examples=50, deadline=None)
def test_logloss_strictly_decreases_as_true_prob_rises(p, bump):
    lo = np.array([[p, 1 - p]])
    hi = np.array([[p + bump, 1 - p - bump]])
    labels = np.array([0])
    assert multiclass_logloss(hi, labels) < multiclass_logloss(lo, labels)


def test_logloss_gradient_is_centered_on_true_class():
    probs = np.array([[0.5, 0.5], [0.25, 0.75]])
    labels = np.array([0, 1])
    grad = logloss_gradient(probs, labels)
    assert np.isclose(grad[0, 0], -1.0 / (2 * 0.5))
    assert grad[0, 1] == 0.0
    assert np.isclose(grad[1, 1], -1.0 / (2 * 0.75))
    assert grad[1, 0] == 0.0


# ---------------------------------------------------------------- accuracy


def test_accuracy_trivials():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([1, 2, 3], [4, 5, 6]) == 0.0
    assert accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75


def test_accuracy_length_mismatch_rejected():
    with pytest.raises(ValueError):
        accuracy([1, 2], [1])


# ---------------------------------------------------------------- confusion


def test_confusion_all_correct_is_diagonal():
    labels = np.array([0, 0, 1, 2, 2, 2])
    cm = confusion_matrix(labels, labels, 3)
    assert np.array_equal(cm.counts, np.diag([2, 1, 3]))
    assert cm.total == 6


def test_confusion_single_misclassification():
    cm = confusion_matrix([2], [5], 8)
    expected = np.zeros((8, 8), dtype=np.int64)
    expected[2, 5] = 1
    assert np.array_equal(cm.counts, expected)


def test_confusion_eight_class_150_sample_layout():
    per_class = (25, 20, 15, 10, 20, 20, 20, 20)
    rng = np.random.default_rng(42)
    true_labels = np.concatenate([np.full(c, i) for i, c in enumerate(per_class)])
    predicted = rng.integers(0, 8, true_labels.size)
    cm = confusion_matrix(true_labels, predicted, 8)
    assert cm.counts.shape == (8, 8)
    assert cm.total == 150
    assert tuple(cm.counts.sum(axis=1)) == per_class
    # column sums are the predicted-class histogram
    assert np.array_equal(cm.counts.sum(axis=0), np.bincount(predicted, minlength=8))


def test_confusion_out_of_range_label_rejected():
    with pytest.raises(ValueError):
        confusion_matrix([0, 8], [0, 1], 8)
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0, -1], 8)


def test_confusion_format_table_lists_class_names():
    cm = confusion_matrix([0, 1], [0, 1], 2)
    table = cm.format_table(["ALB", "BET"])
    lines = table.splitlines()
    assert "ALB" in lines[0] and "BET" in lines[0]
    assert lines[1].strip().startswith("ALB")
