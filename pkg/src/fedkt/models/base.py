from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import ClassVar, Optional

import numpy as np

from . import _codec

KINDS = ("decision_tree", "random_forest", "gbdt", "logistic_regression", "mlp")

# per-kind learning-rate / epoch defaults
_DEFAULT_LR = {"gbdt": 0.05, "mlp": 0.001, "logistic_regression": 0.01}


@dataclass(frozen=True)
class ModelSpec:
    """Learner kind plus hyperparameters.

    Fields that do not apply to ``kind`` are ignored. ``learning_rate=None``
    picks the kind default (0.05 for gbdt, 0.001 for mlp, 0.01 for logistic).
    ``n_trees`` is the forest size for random_forest and the number of
    boosting rounds for gbdt.
    """

    kind: str = "random_forest"
    max_depth: int = 6
    n_trees: int = 20
    max_features: Optional[str] = "sqrt"
    hidden: tuple[int, ...] = (100, 100)
    learning_rate: Optional[float] = None
    epochs: int = 100
    batch_size: int = 32
    l2: float = 1e-6
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("max_depth", "n_trees", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("regularisation terms must be non-negative")
        if self.kind == "mlp" and (not self.hidden or min(self.hidden) < 1):
            raise ValueError("mlp needs at least one hidden layer of positive width")
        if self.max_features not in (None, "sqrt", "all"):
            raise ValueError("max_features must be 'sqrt', 'all' or None")

    @property
    def lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else _DEFAULT_LR.get(self.kind, 0.01)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "max_depth": self.max_depth,
            "n_trees": self.n_trees,
            "max_features": self.max_features,
            "hidden": list(self.hidden),
            "learning_rate": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "l2": self.l2,
            "reg_lambda": self.reg_lambda,
            "min_child_weight": self.min_child_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)

    def replace(self, **kw) -> "ModelSpec":
        return replace(self, **kw)


class Classifier:
    """A trained model. Immutable after ``fit``; ``predict`` is deterministic."""

    kind: ClassVar[str]

    def __init__(self, num_classes: int, dim: int):
        self.num_classes = int(num_classes)
        self.dim = int(dim)

    def scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        """Class ids for each row; score ties go to the smallest id."""
        return np.argmax(self.scores(self._check(X)), axis=1)

    def predict_one(self, x) -> int:
        return int(self.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])

    def accuracy(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def _arrays(self) -> list[np.ndarray]:
        raise NotImplementedError

    @classmethod
    def _from_arrays(cls, num_classes: int, dim: int, arrays: list[np.ndarray]) -> "Classifier":
        raise NotImplementedError

    def to_bytes(self) -> bytes:
        return _codec.encode(self.kind, self.num_classes, self.dim, self._arrays())

    def serialized_size(self) -> int:
        return len(self.to_bytes())


class ConstantClassifier(Classifier):
    """Predicts one class everywhere; produced when training data has a single label."""

    kind = "constant"

    def __init__(self, num_classes: int, dim: int, label: int):
        super().__init__(num_classes, dim)
        self.label = int(label)

    def scores(self, X):
        out = np.zeros((len(X), self.num_classes))
        out[:, self.label] = 1.0
        return out

    def _arrays(self):
        return [np.array([self.label], dtype=np.int32)]

    @classmethod
    def _from_arrays(cls, num_classes, dim, arrays):
        return cls(num_classes, dim, int(arrays[0][0]))
