import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stvslab import metrics
from stvslab.core import Label
from stvslab.errors import DegenerateLabelsError, EmptyInputError, UndefinedMetricError
from stvslab.metrics import ConfusionMatrix

from oracles import mann_whitney_auc, naive_roc


def test_confusion_stable_is_positive():
    cm = metrics.confusion([0, 0, 1, 1, 0], [Label.STABLE, "unstable", 0, 1, 1])
    assert cm == ConfusionMatrix(tp=1, fp=2, fn=1, tn=1)
    assert metrics.accuracy(cm) == pytest.approx(0.4)


def test_f1_modes():
    cm = ConfusionMatrix(tp=8, fp=2, fn=2, tn=8)
    assert metrics.f1(cm) == pytest.approx(0.8)
    assert metrics.f1(cm, "tpr_fpr") == pytest.approx(2 * 0.8 * 0.2 / 1.0)
    with pytest.raises(UndefinedMetricError):
        metrics.f1(ConfusionMatrix(0, 0, 3, 3))
    with pytest.raises(ValueError):
        metrics.f1(cm, "other")


def test_empty_inputs():
    with pytest.raises(EmptyInputError):
        metrics.confusion([], [])
    with pytest.raises(DegenerateLabelsError):
        metrics.roc_curve([0.1, 0.2], [0, 0])


def test_perfect_and_inverted_rankings():
    y = [0, 0, 1, 1]
    assert metrics.auc(metrics.roc_curve([0.9, 0.8, 0.2, 0.1], y)) == 1.0
    assert metrics.auc(metrics.roc_curve([0.1, 0.2, 0.8, 0.9], y)) == 0.0
    assert metrics.auc(metrics.roc_curve([0.5] * 4, y)) == 0.5


def test_roc_endpoints():
    c = metrics.roc_curve([0.3, 0.7, 0.7, 0.1], [0, 1, 0, 1])
    assert (c.fpr[0], c.tpr[0], c.thresholds[0]) == (0.0, 0.0, np.inf)
    assert (c.fpr[-1], c.tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.sampled_from([2, 5, 1000]))
def test_auc_equals_pair_counting(n, seed, levels):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    scores = rng.integers(0, levels, n) / levels
    curve = metrics.roc_curve(scores, y)
    assert abs(metrics.auc(curve) - mann_whitney_auc(scores, y)) < 1e-12
    fpr, tpr = naive_roc(scores, y)
    assert np.array_equal(curve.fpr, fpr) and np.array_equal(curve.tpr, tpr)


def test_evaluate_scores_threshold_tie_is_unstable():
    row, _, cm = metrics.evaluate_scores("m", 3, [0.5, 0.9], [1, 0])
    assert cm == ConfusionMatrix(tp=1, fp=0, fn=0, tn=1)
    assert row.accuracy == 1.0 and row.n == 2


def test_report_serializes_infinite_threshold():
    rep = metrics.EvaluationReport()
    row, curve, _ = metrics.evaluate_scores("m", 3, [0.2, 0.9], [1, 0])
    rep.add(row, curve)
    d = rep.to_dict()
    assert d["roc"]["m@3"]["thresholds"][0] is None
