"""Core data types shared across the package."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np


class PrivacyLevel(str, enum.Enum):
    """Where Laplace noise is injected.

    ``L0`` adds no noise, ``L1`` adds it on the server tier only and ``L2`` on
    the party tier only.
    """

    L0 = "L0"
    L1 = "L1"
    L2 = "L2"

    @classmethod
    def parse(cls, value: "str | PrivacyLevel") -> "PrivacyLevel":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: Optional[int] = None


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense labelled (or unlabelled) feature matrix.

    ``y`` is ``None`` for public auxiliary data. ``label_names`` maps class id
    to the token it was read from, when the data came from a file.
    """

    X: np.ndarray
    y: Optional[np.ndarray]
    num_classes: int
    label_names: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = field(default=(), repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        if X.ndim != 2:
            raise ValueError(f"features must be a 2-D matrix, got shape {X.shape}")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        object.__setattr__(self, "X", _frozen(X))
        if self.y is not None:
            y = np.array(self.y, dtype=np.int64, copy=True).reshape(-1)
            if len(y) != len(X):
                raise ValueError(f"{len(y)} labels for {len(X)} examples")
            if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
                raise ValueError(f"labels must lie in [0, {self.num_classes})")
            object.__setattr__(self, "y", _frozen(y))
        if self.label_names and len(self.label_names) != self.num_classes:
            raise ValueError("label_names must have one entry per class")

    @classmethod
    def from_examples(cls, examples: Sequence[Example], num_classes: int) -> "Dataset":
        if not examples:
            raise ValueError("cannot build a Dataset from zero examples")
        X = np.stack([np.asarray(e.features, dtype=np.float64) for e in examples])
        labels = [e.label for e in examples]
        if all(lab is None for lab in labels):
            y = None
        elif any(lab is None for lab in labels):
            raise ValueError("mixed labelled and unlabelled examples")
        else:
            y = np.asarray(labels)
        return cls(X, y, num_classes)

    def __len__(self) -> int:
        return len(self.X)

    def __getitem__(self, i: int) -> Example:
        return Example(self.X[i], None if self.y is None else int(self.y[i]))

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.X[idx],
            None if self.y is None else self.y[idx],
            self.num_classes,
            self.label_names,
            self.feature_names,
        )

    def unlabeled(self) -> "Dataset":
        return Dataset(self.X, None, self.num_classes, self.label_names, self.feature_names)

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.X, y, self.num_classes, self.label_names, self.feature_names)

    def class_counts(self) -> np.ndarray:
        if self.y is None:
            raise ValueError("dataset is unlabelled")
        return np.bincount(self.y, minlength=self.num_classes)


class VoteHistogram:
    """Per-class vote counts for one query; real-valued once noise is added."""

    __slots__ = ("_counts",)

    def __init__(self, counts, num_classes: Optional[int] = None):
        arr = np.array(counts, dtype=np.float64, copy=True).reshape(-1)
        if num_classes is not None and len(arr) != num_classes:
            raise ValueError(f"histogram has {len(arr)} entries, expected {num_classes}")
        if len(arr) < 1:
            raise ValueError("histogram needs at least one class")
        self._counts = _frozen(arr)

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def num_classes(self) -> int:
        return len(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoteHistogram):
            return NotImplemented
        return np.array_equal(self._counts, other._counts)

    def __repr__(self) -> str:
        return f"VoteHistogram({self._counts.tolist()})"

    def is_integral(self) -> bool:
        return bool(np.all(self._counts == np.round(self._counts)))

    def top_gap(self) -> float:
        """Largest minus second-largest count (0 for a single class)."""
        if len(self._counts) < 2:
            return 0.0
        top2 = np.sort(self._counts)[-2:]
        return float(top2[1] - top2[0])


def make_rng(seed, *key: int) -> np.random.Generator:
    """Deterministic child stream for ``(seed, *key)``.

    Streams derived from distinct keys are statistically independent, so work
    keyed by (party, partition, role) gives the same draws regardless of the
    order or process it runs in.
    """
    if isinstance(seed, np.random.Generator):
        # derive a child from an existing stream without disturbing callers
        base = int(seed.bit_generator.seed_seq.entropy)  # type: ignore[attr-defined]
        spawn_key = tuple(seed.bit_generator.seed_seq.spawn_key)  # type: ignore[attr-defined]
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(base, spawn_key=spawn_key + tuple(key)))
        )
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
    )


RngHandle = np.random.Generator
