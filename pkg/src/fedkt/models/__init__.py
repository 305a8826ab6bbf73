"""Trainable classifiers: teachers, students and the final model all come from here."""

from __future__ import annotations

import numpy as np

from ..domain import Dataset
from . import _codec
from .base import KINDS, Classifier, ConstantClassifier, ModelSpec
from .gbdt import GBDT
from .neural import MLP, LogisticRegression
from .tree import DecisionTree, RandomForest

_REGISTRY: dict[str, type[Classifier]] = {
    "constant": ConstantClassifier,
    "decision_tree": DecisionTree,
    "random_forest": RandomForest,
    "gbdt": GBDT,
    "logistic_regression": LogisticRegression,
    "mlp": MLP,
}


def fit(spec: ModelSpec, train: Dataset, rng: np.random.Generator) -> Classifier:
    """Train ``spec`` on a labelled dataset. A single-label set yields a constant model."""
    if len(train) == 0:
        raise ValueError("empty training set")
    if train.y is None:
        raise ValueError("training set has no labels")
    present = np.unique(train.y)
    if len(present) == 1:
        return ConstantClassifier(train.num_classes, train.dim, int(present[0]))
    return _REGISTRY[spec.kind].fit(
        np.asarray(train.X), np.asarray(train.y), train.num_classes, spec, rng
    )


def predict(model: Classifier, x) -> int:
    return model.predict_one(x)


def serialized_size(model: Classifier) -> int:
    return model.serialized_size()


def load_model(blob: bytes) -> Classifier:
    kind, num_classes, dim, arrays = _codec.decode(blob)
    return _REGISTRY[kind]._from_arrays(num_classes, dim, arrays)


__all__ = [
    "KINDS",
    "Classifier",
    "ConstantClassifier",
    "DecisionTree",
    "GBDT",
    "LogisticRegression",
    "MLP",
    "ModelSpec",
    "RandomForest",
    "fit",
    "load_model",
    "predict",
    "serialized_size",
]
