"""Task-agnostic evaluation: Hungarian-matched clustering accuracy, maximum
forgetting, and per-step metric records.

Overall accuracy uses a single global matching between all cluster ids and
all true labels; forgetting reuses that global matching restricted to the
first task's samples.
"""

import csv
from dataclasses import dataclass, field
import json

import numpy as np
from scipy.optimize import linear_sum_assignment

from .classifier import cosine_logits, predict


def hungarian(cost):
    """Minimum-cost perfect assignment of a square cost matrix.

    Returns the assigned column for each row. The cost equals the
    brute-force minimum over all permutations.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def _contingency(pred, true, n_clusters, n_classes):
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError("pred and true must be equal-length non-empty 1-D arrays")
    if pred.min() < 0 or pred.max() >= n_clusters:
        raise ValueError(f"cluster ids outside [0, {n_clusters})")
    if true.min() < 0 or true.max() >= n_classes:
        raise ValueError(f"labels outside [0, {n_classes})")
    side = max(n_clusters, n_classes)
    counts = np.zeros((side, side), dtype=np.int64)
    np.add.at(counts, (pred, true), 1)
    return counts


def match_clusters(pred, true, n_clusters, n_classes):
    """Optimal cluster -> class map (padded with zero counts when the two
    sides differ in size); maximizes the matched sample mass."""
    counts = _contingency(pred, true, n_clusters, n_classes)
    return hungarian(-counts)


def clustering_accuracy(pred, true, n_clusters, n_classes):
    """Fraction of samples matched correctly under the optimal bijection
    between cluster ids and ground-truth labels."""
    counts = _contingency(pred, true, n_clusters, n_classes)
    perm = hungarian(-counts)
    matched = counts[np.arange(counts.shape[0]), perm].sum()
    return float(matched) / float(counts.sum())


def _pooled(test_sets):
    feats = np.concatenate([z for z, _ in test_sets], axis=0)
    labels = np.concatenate([y for _, y in test_sets], axis=0)
    task_of = np.concatenate(
        [np.full(len(y), t, dtype=np.int64) for t, (_, y) in enumerate(test_sets)]
    )
    return feats, labels, task_of


def overall_accuracy(unified, test_sets):
    """Clustering accuracy of the unified head over the union of all test
    sets seen so far (one global Hungarian matching)."""
    feats, labels, _ = _pooled(test_sets)
    preds = predict(unified, feats)
    n_classes = int(labels.max()) + 1
    return clustering_accuracy(preds, labels, unified.total_classes, n_classes)


def per_task_accuracy(unified, test_sets):
    """Per-task accuracies under the single global matching."""
    feats, labels, task_of = _pooled(test_sets)
    preds = predict(unified, feats)
    n_classes = int(labels.max()) + 1
    mapping = match_clusters(preds, labels, unified.total_classes, n_classes)
    correct = mapping[preds] == labels
    return [float(correct[task_of == t].mean()) for t in range(len(test_sets))]


def maximum_forgetting(step1_head, unified, test_sets):
    """Drop in task-1 accuracy from the step-1 task-specific head to the
    unified model.

    The task-specific side is matched within task 1's own label space; the
    unified side reuses the global matching restricted to task-1 samples.
    """
    z1, y1 = test_sets[0]
    if len(y1) == 0:
        raise ValueError("task-1 test set is empty")
    pred1 = np.argmax(cosine_logits(step1_head, z1), axis=-1)
    # Task-1 labels occupy the first block of the discovery-order space.
    n1 = int(max(step1_head.n_classes, y1.max() + 1))
    acc_specific = clustering_accuracy(pred1, y1, n1, n1)

    feats, labels, task_of = _pooled(test_sets)
    preds = predict(unified, feats)
    n_classes = int(labels.max()) + 1
    mapping = match_clusters(preds, labels, unified.total_classes, n_classes)
    correct = mapping[preds] == labels
    acc_unified = float(correct[task_of == 0].mean())
    return acc_specific - acc_unified


@dataclass
class StepMetrics:
    """Metrics reported after each incremental step."""

    step: int
    accuracy: float
    forgetting: float
    per_task_acc: list = field(default_factory=list)
    n_samples: int = 0


CSV_FIELDS = ["step", "accuracy", "forgetting", "per_task_acc_json", "n_samples"]


def metrics_to_row(m):
    # repr() of Python floats is shortest-round-trip exact, so equal runs
    # produce byte-identical CSV rows.
    return {
        "step": m.step,
        "accuracy": repr(float(m.accuracy)),
        "forgetting": repr(float(m.forgetting)),
        "per_task_acc_json": json.dumps([float(a) for a in m.per_task_acc]),
        "n_samples": m.n_samples,
    }


def append_metrics_csv(path, metrics, write_header):
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if write_header:
            writer.writeheader()
        writer.writerow(metrics_to_row(metrics))


def read_metrics_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(StepMetrics(
                step=int(row["step"]),
                accuracy=float(row["accuracy"]),
                forgetting=float(row["forgetting"]),
                per_task_acc=json.loads(row["per_task_acc_json"]),
                n_samples=int(row["n_samples"]),
            ))
    return out
