import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroergo.errors import ParameterError
from neuroergo.metrics import accuracy, confusion_matrix, roc_auc, roc_curve

from oracles import mann_whitney_auc


def test_auc_matches_pair_counting_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        scores = rng.integers(0, 6, n).astype(float)  # many ties
        pos = rng.random(n) < 0.5
        pos[0], pos[1] = True, False
        assert roc_curve(scores, pos)[3] == mann_whitney_auc(scores, pos)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), min_size=2, max_size=50))
def test_auc_property(pairs):
    scores = np.array([p[0] for p in pairs])
    pos = np.array([p[1] for p in pairs])
    if pos.all() or not pos.any():
        return
    fpr, tpr, thr, auc = roc_curve(scores, pos)
    assert auc == mann_whitney_auc(scores, pos)
    assert fpr[0] == tpr[0] == 0 and fpr[-1] == tpr[-1] == 1
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert roc_curve(-scores, pos)[3] == pytest.approx(1 - auc, abs=1e-12)


def test_auc_known_cases():
    assert roc_curve([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])[3] == 1.0
    assert roc_curve([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0])[3] == 0.0
    assert roc_curve([0.5] * 4, [1, 0, 1, 0])[3] == 0.5
    with pytest.raises(ParameterError):
        roc_curve([0.1, 0.2], [1, 1])


def test_confusion_trace_equals_accuracy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 80))
        y, p = rng.integers(1, 4, n), rng.integers(1, 4, n)
        cm = confusion_matrix(p, y)
        assert cm.sum() == n
        assert np.trace(cm) / cm.sum() == accuracy(p, y)
        assert cm.sum(axis=1).tolist() == [int(np.sum(y == c)) for c in (1, 2, 3)]
    with pytest.raises(ParameterError):
        confusion_matrix([4], [1])


def test_multiclass_roc():
    rng = np.random.default_rng(2)
    labels = np.repeat([1, 2, 3], 20)
    scores = rng.random((60, 3))
    scores[np.arange(60), labels - 1] += 0.5
    roc = roc_auc(scores, labels)
    assert set(roc) == {"class_1", "class_2", "class_3", "micro", "macro"}
    for c in (1, 2, 3):
        assert roc[f"class_{c}"]["auc"] == mann_whitney_auc(scores[:, c - 1], labels == c)
    onehot = labels[:, None] == np.array([1, 2, 3])
    assert roc["micro"]["auc"] == mann_whitney_auc(scores.ravel(), onehot.ravel())
    assert roc["macro"]["auc"] == pytest.approx(np.mean([roc[f"class_{c}"]["auc"] for c in (1, 2, 3)]))
    with pytest.raises(ParameterError):
        roc_auc(scores[:, :2], labels)
