"""CART trees (Gini, exhaustive thresholds) and bagged random forests."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import _kernels
from .base import Classifier

LEAF = -1


class TreeArrays:
    """Flat node arrays. ``value`` holds class probabilities (classification)
    or a single leaf weight (regression)."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        if self.value.ndim == 1:
            self.value = self.value.reshape(-1, 1)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        return _kernels.apply_tree(
            self.feature, self.threshold, self.left, self.right,
            np.ascontiguousarray(X, dtype=np.float64),
        )

    def arrays(self) -> list[np.ndarray]:
        return [self.feature, self.threshold, self.left, self.right, self.value]


def _n_candidate_features(dim: int, max_features: Optional[str]) -> int:
    if max_features == "sqrt":
        return max(1, int(math.sqrt(dim)))
    return dim


def build_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    max_depth: int,
    rng: Optional[np.random.Generator] = None,
    max_features: Optional[str] = None,
    ranked=None,
) -> TreeArrays:
    """Grow one Gini tree; leaves store class frequencies.

    With ``max_features='sqrt'`` each node looks at features in a random
    order (drawn from ``rng``) until ``sqrt(dim)`` non-constant ones were tried.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    ranks, values, offsets, nvals = ranked if ranked is not None else _kernels.dense_ranks(X)
    k = _n_candidate_features(X.shape[1], max_features)
    shuffle = k < X.shape[1]
    seed = int(rng.integers(0, 2**31 - 1)) if shuffle else 0
    feature, threshold, left, right, counts = _kernels.grow_gini_tree(
        X, ranks, values, offsets, nvals, y, num_classes, max_depth, k, shuffle, seed
    )
    return TreeArrays(feature, threshold, left, right, counts / counts.sum(axis=1, keepdims=True))


class DecisionTree(Classifier):
    kind = "decision_tree"

    def __init__(self, num_classes: int, dim: int, tree: TreeArrays):
        super().__init__(num_classes, dim)
        self.tree = tree

    @classmethod
    def fit(cls, X, y, num_classes, spec, rng):
        return cls(num_classes, X.shape[1], build_classification_tree(X, y, num_classes, spec.max_depth))

    def scores(self, X):
        return self.tree.value[self.tree.apply(X)]

    def _arrays(self):
        return self.tree.arrays()

    @classmethod
    def _from_arrays(cls, num_classes, dim, arrays):
        return cls(num_classes, dim, TreeArrays(*arrays))


class RandomForest(Classifier):
    """Bootstrap-bagged Gini trees with per-node feature subsampling; class
    scores are the mean of the trees' leaf distributions."""

    kind = "random_forest"

    def __init__(self, num_classes: int, dim: int, trees: list[TreeArrays]):
        super().__init__(num_classes, dim)
        self.trees = trees

    @classmethod
    def fit(cls, X, y, num_classes, spec, rng):
        X = np.ascontiguousarray(X, dtype=np.float64)
        ranks, values, offsets, nvals = _kernels.dense_ranks(X)
        n = len(y)
        trees = []
        for _ in range(spec.n_trees):
            boot = rng.integers(0, n, size=n)
            trees.append(
                build_classification_tree(
                    X[boot], y[boot], num_classes, spec.max_depth, rng, spec.max_features,
                    ranked=(np.ascontiguousarray(ranks[boot]), values, offsets, nvals),
                )
            )
        return cls(num_classes, X.shape[1], trees)

    def scores(self, X):
        acc = np.zeros((len(X), self.num_classes))
        for tree in self.trees:
            acc += tree.value[tree.apply(X)]
        return acc / len(self.trees)

    def _arrays(self):
        out = [np.array([len(self.trees)], dtype=np.int32)]
        for tree in self.trees:
            out.extend(tree.arrays())
        return out

    @classmethod
    def _from_arrays(cls, num_classes, dim, arrays):
        n = int(arrays[0][0])
        return cls(num_classes, dim, [TreeArrays(*arrays[1 + 5 * i : 6 + 5 * i]) for i in range(n)])
