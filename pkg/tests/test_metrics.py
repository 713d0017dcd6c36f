import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpsd.evaluation.metrics import (
    ConfusionMatrix,
    aggregate,
    macro_auc,
    metrics_from_confusion,
    midranks,
    roc_auc,
)


def brute_force_auc(scores, labels):
    pos = scores[labels]
    neg = scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def trapezoid_auc(scores, labels):
    # empirical ROC with tied scores stepping together
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tpr, fpr = [0.0], [0.0]
    for v in np.unique(s)[::-1]:
        block = s == v
        tpr.append(tpr[-1] + y[block].sum() / labels.sum())
        fpr.append(fpr[-1] + (~y[block]).sum() / (~labels).sum())
    return float(np.sum(np.diff(fpr) * (np.array(tpr[1:]) + np.array(tpr[:-1])) / 2))


def test_auc_matches_pairwise_oracle_on_tied_cases():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores = rng.integers(0, 20, 200).astype(float)  # heavy ties
        labels = rng.random(200) < rng.uniform(0.1, 0.9)
        if labels.all() or not labels.any():
            labels[0] = not labels[0]
        assert abs(roc_auc(scores, labels) - brute_force_auc(scores, labels)) < 1e-12


def test_auc_equals_trapezoid_area():
    rng = np.random.default_rng(1)
    scores = np.round(rng.normal(size=300), 1)
    labels = rng.random(300) < 0.3
    assert roc_auc(scores, labels) == pytest.approx(trapezoid_auc(scores, labels), abs=1e-12)


def test_auc_edge_cases():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [False, False, True, True]) == 1.0
    assert roc_auc([0.5] * 6, [True, False] * 3) == 0.5
    assert roc_auc([0.1, 0.2], [True, True]) is None
    assert roc_auc([], []) is None


def test_midranks_share_tied_positions():
    assert midranks(np.array([3.0, 1.0, 3.0, 2.0])).tolist() == [3.5, 1.0, 3.5, 2.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=60, unique=True), st.randoms())
def test_auc_complement_and_monotone_invariance(scores, rnd):
    s = np.array(scores)
    y = np.array([rnd.random() < 0.5 for _ in s])
    y[0], y[1] = True, False
    a = roc_auc(s, y)
    assert a + roc_auc(-s, y) == pytest.approx(1.0, abs=1e-12)
    ranks = np.argsort(np.argsort(s)).astype(float)  # exact strictly increasing relabeling
    assert roc_auc(ranks**3 + 5.0, y) == pytest.approx(a, abs=1e-12)


def test_macro_auc_skips_absent_classes():
    proba = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0], [0.7, 0.3, 0.0], [0.1, 0.9, 0.0]])
    labels = np.array([0, 1, 0, 1])
    assert macro_auc(proba, labels) == 1.0
    assert macro_auc(proba[:, :1], np.zeros(4, dtype=int)) is None


def test_confusion_hand_values():
    r = metrics_from_confusion(ConfusionMatrix(np.array([[50, 10], [5, 35]])), positive=1)
    assert r.sensitivity == pytest.approx(0.875, abs=1e-4)
    assert r.specificity == pytest.approx(0.8333, abs=1e-4)
    assert r.accuracy == pytest.approx(0.85, abs=1e-4)
    assert r.precision == pytest.approx(0.7778, abs=1e-4)
    assert r.f1 == pytest.approx(0.8235, abs=1e-4)
    assert r.undefined == ("auc",)


def test_confusion_from_labels_counts():
    cm = ConfusionMatrix.from_labels([0, 0, 1, 2, 2], [0, 1, 1, 2, 0], 3)
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 1]]
    assert cm.one_vs_rest(0) == (1, 1, 1, 2)


def test_diagonal_matrix_is_perfect():
    r = metrics_from_confusion(ConfusionMatrix(np.diag([4, 3, 5])), macro=True, auc=1.0)
    assert all(r.get(m) == 1.0 for m in ("sensitivity", "specificity", "accuracy", "precision", "f1"))


def test_zero_predicted_positives_flags_precision_and_f1():
    r = metrics_from_confusion(ConfusionMatrix(np.array([[8, 0], [2, 0]])), positive=1)
    assert r.precision is None and r.f1 is None
    assert {"precision", "f1"} <= set(r.undefined)
    assert r.sensitivity == 0.0 and r.accuracy == 0.8


def test_no_positive_truth_flags_sensitivity():
    r = metrics_from_confusion(ConfusionMatrix(np.array([[7, 3], [0, 0]])), positive=1)
    assert r.sensitivity is None and r.precision == 0.0 and r.f1 is None
    assert not any(isinstance(v, float) and math.isnan(v) for v in r.as_dict().values())


def test_macro_two_class_symmetric_average():
    cm = ConfusionMatrix(np.array([[50, 10], [5, 35]]))
    pos = metrics_from_confusion(cm, positive=1)
    neg = metrics_from_confusion(cm, positive=0)
    mac = metrics_from_confusion(cm, macro=True)
    for m in ("sensitivity", "specificity", "precision", "f1"):
        assert mac.get(m) == pytest.approx((pos.get(m) + neg.get(m)) / 2, abs=1e-12)
    assert mac.sensitivity == pytest.approx(mac.specificity)


def test_macro_excludes_undefined_components():
    # class 2 never predicted: its precision is undefined and left out of the mean
    cm = ConfusionMatrix(np.array([[5, 1, 0], [1, 5, 0], [1, 1, 0]]))
    r = metrics_from_confusion(cm, macro=True)
    assert r.precision == pytest.approx(np.mean([5 / 7, 5 / 7]))


def test_empty_confusion_rejected():
    with pytest.raises(ValueError):
        metrics_from_confusion(ConfusionMatrix(np.zeros((2, 2), dtype=int)))


def test_aggregate_hand_arithmetic():
    a = aggregate([0.8, 0.9])
    assert a.mean == pytest.approx(0.85) and a.std == pytest.approx(0.0707, abs=1e-4)
    single = aggregate([0.7])
    assert single.std == 0.0 and single.single
    mixed = aggregate([0.5, None, float("nan")])
    assert (mixed.n, mixed.n_excluded, mixed.mean) == (1, 2, 0.5)
    assert aggregate([None]).fmt() == "n/a"
