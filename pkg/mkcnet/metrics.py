# -*- coding: utf-8 -*-
# Evaluation metrics
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Macro one-vs-rest AUC, accuracy and macro F1, reported on all images and on
the high- and low-quality subsets.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset
from .exception import MkcException
from .model import MKCModel
from .params import ParamSet
from .record import no_record
from .tensor import softmax

log = logging.getLogger(__name__)

SUBSETS = ("all", "hq", "lq")


class MetricError(MkcException):
    """Metric undefined for the given labels."""


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """
    Mann-Whitney AUC: the probability that a positive outscores a negative,
    ties counting one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs positives and negatives")
    ranks = rankdata(scores)  # average ranks on ties
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_per_class(scores: np.ndarray, labels: np.ndarray) -> Dict[int, Optional[float]]:
    """
    One-vs-rest AUC of every column of `scores`; `None` for classes without
    positives (or without negatives).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    result = {}  # type: Dict[int, Optional[float]]
    for k in range(scores.shape[1]):
        positive = labels == k
        if positive.all() or not positive.any():
            result[k] = None
        else:
            result[k] = binary_auc(scores[:, k], positive)
    return result


def auc_macro_ovr(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Mean one-vs-rest AUC over the classes present; classes without positives
    are skipped with a warning. A 1-D `scores` is a binary problem, the score
    of class 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise MetricError("all labels belong to one class")
    if scores.ndim == 1:
        return binary_auc(scores, labels == 1)
    per_class = auc_per_class(scores, labels)
    skipped = [k for k, v in per_class.items() if v is None]
    if skipped:
        log.warning("AUC skipped for classes without positives: %s", skipped)
    return float(np.mean([v for v in per_class.values() if v is not None]))


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise MetricError("no sample")
    return float(np.mean(np.asarray(predictions) == labels))


def precision_recall_f1(predictions: np.ndarray, labels: np.ndarray, k: int) -> Dict[str, float]:
    predicted = np.asarray(predictions) == k
    actual = np.asarray(labels) == k
    true_pos = float(np.sum(predicted & actual))
    precision = true_pos / predicted.sum() if predicted.any() else 0.0
    recall = true_pos / actual.sum() if actual.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": float(precision), "recall": float(recall), "f1": float(f1)}


def f1_macro(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean F1 over the classes present in the labels or the predictions."""
    classes = np.union1d(np.asarray(labels), np.asarray(predictions))
    if classes.size == 0:
        raise MetricError("no sample")
    return float(np.mean([precision_recall_f1(predictions, labels, int(k))["f1"] for k in classes]))


@dataclass
class MetricsBundle:
    """Metrics of one subset; `None` where undefined."""
    subset: str
    n: int
    auc_macro_ovr: Optional[float]
    accuracy: Optional[float]
    f1_macro: Optional[float]
    per_class: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    skipped_classes: List[int] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)


def metrics_bundle(scores: np.ndarray, labels: np.ndarray, subset: str = "all") -> MetricsBundle:
    """
    Args:
        scores: (N, K) class probabilities
        labels: (N,) labels
        subset: Name reported in the bundle
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return MetricsBundle(subset, 0, None, None, None)
    predictions = np.argmax(scores, axis=1)
    per_auc = auc_per_class(scores, labels)
    skipped = [k for k, v in per_auc.items() if v is None]
    defined = [v for v in per_auc.values() if v is not None]
    if skipped:
        log.warning("%s: AUC skipped for classes %s", subset, skipped)
    per_class = {}
    for k in range(scores.shape[1]):
        entry = dict(precision_recall_f1(predictions, labels, k))
        entry["auc"] = per_auc[k]
        entry["support"] = int(np.sum(labels == k))
        per_class[str(k)] = entry
    return MetricsBundle(subset, int(labels.size),
                         float(np.mean(defined)) if defined else None,
                         accuracy(predictions, labels),
                         f1_macro(predictions, labels),
                         per_class, skipped)


def predict(model: MKCModel, theta: ParamSet, dataset: Dataset, batch_size: int = 64) -> np.ndarray:
    """Diagnosis probabilities (N, D)."""
    if len(dataset) == 0:
        return np.zeros((0, model.config.num_diagnosis))
    parts = []
    with no_record():
        for batch in dataset.batches(batch_size):
            parts.append(softmax(model.forward(batch.x, theta).logits_d, axis=-1).data)
    return np.concatenate(parts)


def evaluate(model: MKCModel, theta: ParamSet, dataset: Dataset, batch_size: int = 64) -> Dict[str, MetricsBundle]:
    """
    Returns:
        subset name (`all`, `hq`, `lq`) -> metrics
    """
    scores = predict(model, theta, dataset, batch_size)
    result = {}
    for subset in SUBSETS:
        if subset == "all":
            keep = np.ones(len(dataset), dtype=bool)
        elif subset == "hq":
            keep = dataset.y_q == 0
        else:
            keep = dataset.y_q > 0
        result[subset] = metrics_bundle(scores[keep], dataset.y_d[keep], subset)
    return result
