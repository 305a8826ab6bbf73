"""Second-order gradient boosting with softmax/logistic loss."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .base import Classifier
from .tree import TreeArrays


def build_regression_tree(X, g, h, max_depth, reg_lambda, min_child_weight) -> TreeArrays:
    """Newton tree: leaf weight ``-G / (H + lambda)``, split gain on G^2/(H+lambda)."""
    return TreeArrays(*_kernels.grow_newton_tree(
        X, np.ascontiguousarray(g, dtype=np.float64), np.ascontiguousarray(h, dtype=np.float64),
        max_depth, float(reg_lambda), float(min_child_weight),
    ))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class GBDT(Classifier):
    """Binary tasks boost one logit (class-1 margin); ``u > 2`` boosts one
    tree per class per round on the softmax loss."""

    kind = "gbdt"

    def __init__(self, num_classes, dim, base, learning_rate, trees):
        super().__init__(num_classes, dim)
        self.base = np.asarray(base, dtype=np.float64)
        self.learning_rate = float(learning_rate)
        self.trees = trees  # rounds x outputs
        self.loss_history: list[float] = []

    @property
    def n_outputs(self) -> int:
        return 1 if self.num_classes == 2 else self.num_classes

    @staticmethod
    def loss(margin: np.ndarray, y: np.ndarray, num_classes: int) -> float:
        """Mean negative log-likelihood of ``y`` under raw margins."""
        if num_classes == 2:
            z = margin[:, 0]
            return float(np.mean(np.logaddexp(0.0, z) - z * (y == 1)))
        zmax = margin.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(margin - zmax).sum(axis=1))
        return float(np.mean(lse - margin[np.arange(len(y)), y]))

    @classmethod
    def fit(cls, X, y, num_classes, spec, rng):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n = len(y)
        prior = np.bincount(y, minlength=num_classes) / n
        prior = np.clip(prior, 1e-6, None)
        if num_classes == 2:
            base = np.array([np.log(prior[1] / prior[0])])
        else:
            base = np.log(prior)
        model = cls(num_classes, X.shape[1], base, spec.lr, [])
        k = model.n_outputs
        margin = np.tile(base, (n, 1))
        onehot = np.eye(num_classes)[y]
        model.loss_history.append(cls.loss(margin, y, num_classes))
        for _ in range(spec.n_trees):
            if num_classes == 2:
                p = _sigmoid(margin[:, 0])
                grads = [(p - (y == 1), np.maximum(p * (1 - p), 1e-16))]
            else:
                p = _softmax(margin)
                grads = [(p[:, c] - onehot[:, c], np.maximum(p[:, c] * (1 - p[:, c]), 1e-16)) for c in range(k)]
            round_trees = []
            for c, (g, h) in enumerate(grads):
                tree = build_regression_tree(
                    X, g, h, spec.max_depth, spec.reg_lambda, spec.min_child_weight
                )
                margin[:, c] += spec.lr * tree.value[tree.apply(X), 0]
                round_trees.append(tree)
            model.trees.append(round_trees)
            model.loss_history.append(cls.loss(margin, y, num_classes))
        return model

    def margin(self, X):
        out = np.tile(self.base, (len(X), 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                out[:, c] += self.learning_rate * tree.value[tree.apply(X), 0]
        return out

    def scores(self, X):
        m = self.margin(X)
        if self.num_classes == 2:
            p1 = _sigmoid(m[:, 0])
            return np.column_stack([1.0 - p1, p1])
        return _softmax(m)

    def _arrays(self):
        out = [self.base, np.array([self.learning_rate]), np.array([len(self.trees)], dtype=np.int32)]
        for round_trees in self.trees:
            for tree in round_trees:
                out.extend(tree.arrays())
        return out

    @classmethod
    def _from_arrays(cls, num_classes, dim, arrays):
        base, lr, n_rounds = arrays[0], float(arrays[1][0]), int(arrays[2][0])
        k = 1 if num_classes == 2 else num_classes
        flat = [TreeArrays(*arrays[3 + 5 * i : 8 + 5 * i]) for i in range(n_rounds * k)]
        return cls(num_classes, dim, base, lr, [flat[r * k : (r + 1) * k] for r in range(n_rounds)])
