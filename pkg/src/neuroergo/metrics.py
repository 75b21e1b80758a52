"""Classification metrics: confusion matrix, accuracy and one-vs-rest ROC.

ROC areas use the trapezoid rule over distinct score thresholds. The sum
is carried in integer counts and divided once, so the result equals the
Mann-Whitney statistic ``U / (n_pos * n_neg)`` exactly, ties getting half
credit.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError

CLASSES = (1, 2, 3)


def confusion_matrix(preds, labels, classes=CLASSES):
    """Counts with rows = true class, columns = predicted class."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ParameterError("preds and labels differ in shape")
    k = len(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        p = np.array([lookup[v] for v in preds.tolist()], dtype=np.intp)
        t = np.array([lookup[v] for v in labels.tolist()], dtype=np.intp)
    except KeyError as exc:
        raise ParameterError(f"unknown class {exc.args[0]!r}") from None
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def accuracy(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ParameterError("no samples")
    return int(np.sum(preds == labels)) / labels.size


def roc_curve(scores, positive):
    """Binary ROC. Returns ``(fpr, tpr, thresholds, auc)``.

    Points run from (0, 0) through one point per distinct score (high to low).
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("ROC needs both positive and negative samples")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, np.cumsum(~y)[last]]
    twice_u = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_u / (2 * n_pos * n_neg)
    return fp / n_neg, tp / n_pos, np.r_[np.inf, s[last]], auc


def roc_auc(scores, labels, classes=CLASSES):
    """Per-class, micro and macro ROC for ``(n, k)`` class scores.

    Returns a dict ``{key: {"fpr", "tpr", "auc"}}`` with keys ``"micro"``,
    ``"macro"`` and ``"class_<c>"``. The macro entry's curve is the mean
    of the class TPRs over the union of their FPR grids.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != (labels.size, len(classes)):
        raise ParameterError(f"scores must be (n, {len(classes)}) matching labels")
    onehot = labels[:, None] == np.asarray(classes)[None, :]
    out = {}
    for i, c in enumerate(classes):
        fpr, tpr, _, auc = roc_curve(scores[:, i], onehot[:, i])
        out[f"class_{c}"] = {"fpr": fpr, "tpr": tpr, "auc": auc}
    fpr, tpr, _, auc = roc_curve(scores.ravel(), onehot.ravel())
    out["micro"] = {"fpr": fpr, "tpr": tpr, "auc": auc}
    grid = np.unique(np.concatenate([out[f"class_{c}"]["fpr"] for c in classes]))
    mean_tpr = np.mean([np.interp(grid, out[f"class_{c}"]["fpr"], out[f"class_{c}"]["tpr"])
                        for c in classes], axis=0)
    out["macro"] = {"fpr": grid, "tpr": mean_tpr,
                    "auc": float(np.mean([out[f"class_{c}"]["auc"] for c in classes]))}
    return out


def auc_summary(roc):
    return {k: float(v["auc"]) for k, v in roc.items()}
