"""Threshold metrics and rank-based ROC analysis with midrank tie handling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


def _check_pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise MetricsError(f"scores shape {scores.shape} != labels shape {labels.shape}")
    return scores, labels


def confusion_at_threshold(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Predict positive iff score >= threshold."""
    scores, labels = _check_pair(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def precision_recall_f1(c: ConfusionCounts):
    """(precision, recall, f1, flags); zero denominators yield 0 and a flag."""
    flags = []
    if c.tp + c.fp == 0:
        precision = 0.0
        flags.append("no_positive_predictions")
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 0.0
        flags.append("no_positive_labels")
    else:
        recall = c.tp / (c.tp + c.fn)
    if precision + recall == 0.0:
        f1 = 0.0
        flags.append("f1_undefined")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1, flags


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged; O(n log n)."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + half credit for ties."""
    scores, labels = _check_pair(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("roc_auc needs both classes present")
    ranks = _midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> np.ndarray:
    """(fpr, tpr) pairs over all distinct-score thresholds, (0,0) to (1,1).

    The trapezoid area under these points equals roc_auc.
    """
    scores, labels = _check_pair(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("roc_points needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = pos[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(np.sum(sorted_pos[i:j + 1]))
        fp += (j + 1 - i) - int(np.sum(sorted_pos[i:j + 1]))
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return np.array(points)


def trapezoid_auc(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * (x[1:] - x[:-1])))


def metrics_report(scores, labels, threshold: float = 0.5) -> dict:
    """The JSON-serializable report bundle: AUC plus threshold metrics."""
    c = confusion_at_threshold(scores, labels, threshold)
    precision, recall, f1, flags = precision_recall_f1(c)
    return {
        "auc": roc_auc(scores, labels),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "threshold": threshold,
        "confusion": {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn},
        "flags": flags,
    }
