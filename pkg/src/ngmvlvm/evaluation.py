"""Downstream metrics on learned latents: KNN cross-validation, R^2 alignment, MSE."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EvalReport",
    "stratified_folds",
    "knn_predict",
    "knn_cv_accuracy",
    "r2_alignment",
    "mse",
    "REPORT_SCHEMA",
]

REPORT_SCHEMA = "ngmvlvm-report-v1"


@dataclass
class EvalReport:
    """Per-fold (or per-seed) values of one metric with their summary statistics."""

    metric: str
    values: list
    config: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    def to_dict(self) -> dict:
        return {"schema": REPORT_SCHEMA, "metric": self.metric,
                "values": [float(x) for x in self.values], "mean": self.mean,
                "std": self.std, "config": self.config}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "fold", "value"])
            for i, x in enumerate(self.values):
                w.writerow([self.metric, i, repr(float(x))])


def stratified_folds(labels, folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < folds):
        small = classes[counts < folds].tolist()
        raise ValueError(f"classes {small} have fewer than {folds} members; use fewer folds")
    rng = np.random.default_rng([seed, 19])
    fold_ids = np.empty(labels.shape[0], dtype=int)
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(labels == c))
        fold_ids[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return fold_ids


def knn_predict(X_train, y_train, X_test, k: int = 1) -> np.ndarray:
    """Euclidean k-NN majority vote.

    Distance ties go to the smaller training index; vote ties to the smaller
    class id.
    """
    X_train = np.asarray(X_train, float)
    X_test = np.asarray(X_test, float)
    y_train = np.asarray(y_train)
    d2 = (np.sum(X_test ** 2, axis=1)[:, None] - 2.0 * X_test @ X_train.T
          + np.sum(X_train ** 2, axis=1)[None, :])
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    classes = np.unique(y_train)
    votes = (y_train[nearest][:, :, None] == classes[None, None, :]).sum(axis=1)
    return classes[np.argmax(votes, axis=1)]


def knn_cv_accuracy(X, labels, k: int = 1, folds: int = 5, seed: int = 0,
                    fold_ids=None) -> EvalReport:
    """Stratified ``folds``-fold cross-validated k-NN accuracy on ``X``.

    ``fold_ids`` overrides the seeded stratified assignment.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if k < 1 or folds < 2:
        raise ValueError("need k >= 1 and folds >= 2")
    if labels.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per row of X")
    if X.shape[0] < folds:
        raise ValueError("fewer samples than folds")
    fold_ids = stratified_folds(labels, folds, seed) if fold_ids is None else np.asarray(fold_ids)
    accs = []
    for f in range(folds):
        test = fold_ids == f
        pred = knn_predict(X[~test], labels[~test], X[test], k)
        accs.append(float(np.mean(pred == labels[test])))
    return EvalReport("knn_accuracy", accs, {"k": k, "folds": folds, "seed": seed})


def r2_alignment(X_learned, X_true) -> float:
    """R^2 of the least-squares affine map from ``X_learned`` onto ``X_true``.

    ``1 - RSS / TSS`` with TSS the centred total sum of squares of ``X_true``.
    Invariant to invertible affine transformations of ``X_learned``.
    """
    A = np.atleast_2d(np.asarray(X_learned, dtype=float))
    B = np.atleast_2d(np.asarray(X_true, dtype=float))
    if A.shape[0] != B.shape[0]:
        raise ValueError("X_learned and X_true need the same number of rows")
    N, D = A.shape
    if N <= D + 1:
        raise ValueError(f"affine fit is underdetermined with N={N}, D={D}")
    design = np.column_stack([A, np.ones(N)])
    coef, *_ = np.linalg.lstsq(design, B, rcond=None)
    rss = np.sum((B - design @ coef) ** 2)
    tss = np.sum((B - B.mean(axis=0)) ** 2)
    return float(1.0 - rss / tss)


def mse(Y, Y_hat, mask=None) -> float:
    """Mean squared difference, optionally restricted to entries where ``mask`` is true."""
    Y = np.asarray(Y, dtype=float)
    Y_hat = np.asarray(Y_hat, dtype=float)
    if Y.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch {Y.shape} vs {Y_hat.shape}")
    diff = (Y - Y_hat) ** 2
    if mask is not None:
        diff = diff[np.asarray(mask, dtype=bool)]
    if diff.size == 0:
        raise ValueError("mse over an empty selection")
    return float(np.mean(diff))
