"""Classifier wrappers, accuracy metrics and the majority baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol as TypingProtocol

import numpy as np

from ..core import BinaryLabel
from ..model import predict_from_logits
from ..train import batched_logits


class Classifier(TypingProtocol):
    def predict_batch(self, X: np.ndarray) -> np.ndarray: ...


@dataclass
class ModelClassifier:
    params: object

    def predict_batch(self, X):
        return predict_from_logits(batched_logits(self.params, X))


@dataclass(frozen=True)
class ConstantClassifier:
    label: BinaryLabel

    def predict_batch(self, X):
        return np.full(len(X), int(self.label), dtype=np.int64)


def majority_baseline(train_labels) -> ConstantClassifier:
    """Predict the most common training label; an even split predicts Stable."""
    y = np.asarray(train_labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("majority baseline needs at least one training label")
    n_not = int(y.sum())
    return ConstantClassifier(BinaryLabel.NOT_STABLE if n_not > y.size - n_not else BinaryLabel.STABLE)


@dataclass(frozen=True, eq=False)
class Metrics:
    accuracy: float
    accuracy_on_sneq: float
    confusion: np.ndarray  # rows: true label, columns: predicted
    n: int
    n_sneq: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "accuracy_on_Sneq": self.accuracy_on_sneq,
                "confusion": self.confusion.tolist(), "n": self.n, "n_Sneq": self.n_sneq}


def score(pred, y_shake, y_pose) -> Metrics:
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(y_shake, dtype=np.int64)
    yp = np.asarray(y_pose, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cannot evaluate on an empty test set")
    confusion = np.zeros((2, 2), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    hit = pred == y
    neq = yp != y
    acc_neq = float(hit[neq].mean()) if neq.any() else float("nan")
    return Metrics(float(hit.mean()), acc_neq, confusion, int(y.size), int(neq.sum()))


def evaluate(clf: Classifier, X, y_shake, y_pose) -> Metrics:
    """Score predictions on the test slice against shake-phase labels."""
    if len(X) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return score(clf.predict_batch(X), y_shake, y_pose)
