"""Splitting data across parties and, inside a party, into teacher subsets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domain import Dataset


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionLayout:
    """Index lists into the global train set, one per party."""

    party_indices: tuple[np.ndarray, ...]
    scheme: str = "homogeneous"
    # class-by-party Dirichlet proportions, kept for the report
    proportions: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_parties(self) -> int:
        return len(self.party_indices)

    def sizes(self) -> list[int]:
        return [len(ix) for ix in self.party_indices]

    def party_datasets(self, data: Dataset) -> list[Dataset]:
        return [data.subset(ix) for ix in self.party_indices]

    def check(self, total: int) -> None:
        """Raise if the layout is not an exact, non-empty cover of ``range(total)``."""
        if any(len(ix) == 0 for ix in self.party_indices):
            raise PartitionError("empty party")
        allidx = np.concatenate(self.party_indices)
        if len(allidx) != total or not np.array_equal(np.sort(allidx), np.arange(total)):
            raise PartitionError("party index lists do not partition the train set")

    def summary(self, data: Dataset) -> dict:
        out = {"scheme": self.scheme, "sizes": self.sizes()}
        if data.y is not None:
            out["class_histograms"] = [
                np.bincount(data.y[ix], minlength=data.num_classes).tolist()
                for ix in self.party_indices
            ]
        return out


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer counts proportional to ``weights`` that sum exactly to ``total``.

    Ties in the fractional parts go to the lower index.
    """
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    raw = w * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        frac = raw - counts
        order = np.argsort(-frac, kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(
    data: Dataset,
    n: int,
    beta: float,
    rng: np.random.Generator,
    min_size: int = 1,
    max_draws: int = 1000,
) -> PartitionLayout:
    """Label-skewed split: class ``k`` is spread over parties by ``p_k ~ Dir_n(beta)``.

    One independent Dirichlet draw per class, in class order, from ``rng``.
    With ``min_size > 1`` the whole draw is repeated until every party holds
    at least ``min_size`` examples (at most ``max_draws`` attempts); with the
    default, empty parties are instead repaired by a single donation.
    """
    if n < 1:
        raise PartitionError("need at least one party")
    if not beta > 0:
        raise PartitionError("beta must be positive")
    if data.y is None:
        raise PartitionError("dirichlet partition needs labels")
    if len(data) < n:
        raise PartitionError(f"insufficient data: {len(data)} examples for {n} parties")
    if min_size > 1:
        if len(data) < n * min_size:
            raise PartitionError(f"insufficient data: {len(data)} examples for {n} parties of {min_size}")
        for _ in range(max_draws):
            layout = _dirichlet_draw(data, n, beta, rng)
            if min(layout.sizes()) >= min_size:
                return layout
        raise PartitionError(f"no draw in {max_draws} gave every party {min_size} examples")
    return _dirichlet_draw(data, n, beta, rng)


def _dirichlet_draw(data: Dataset, n: int, beta: float, rng: np.random.Generator) -> PartitionLayout:
    buckets: list[list[np.ndarray]] = [[] for _ in range(n)]
    props = np.zeros((data.num_classes, n))
    for k in range(data.num_classes):
        idx_k = np.flatnonzero(data.y == k)
        if len(idx_k) == 0:
            continue
        p = rng.dirichlet(np.full(n, beta)) if n > 1 else np.ones(1)
        props[k] = p
        idx_k = rng.permutation(idx_k)
        counts = largest_remainder(p, len(idx_k))
        for j, chunk in enumerate(np.split(idx_k, np.cumsum(counts)[:-1])):
            buckets[j].append(chunk)

    parties = [np.concatenate(b) if b else np.empty(0, dtype=np.int64) for b in buckets]
    # repair: each empty party takes one example from the currently largest party
    for j in range(n):
        if len(parties[j]) == 0:
            donor = int(np.argmax([len(p) for p in parties]))
            parties[j] = parties[donor][-1:]
            parties[donor] = parties[donor][:-1]
    layout = PartitionLayout(
        tuple(np.sort(p).astype(np.int64) for p in parties), "dirichlet", props
    )
    layout.check(len(data))
    return layout


def homogeneous_partition(data: Dataset, n: int, rng: np.random.Generator) -> PartitionLayout:
    """Uniformly random split into ``n`` near-equal parties."""
    if n < 1:
        raise PartitionError("need at least one party")
    if n > len(data):
        raise PartitionError(f"insufficient data: {len(data)} examples for {n} parties")
    perm = rng.permutation(len(data))
    return PartitionLayout(
        tuple(np.sort(c).astype(np.int64) for c in np.array_split(perm, n)), "homogeneous"
    )


@dataclass(frozen=True)
class LocalSplit:
    """``subsets[j][k]``: indices of teacher ``k`` in partition ``j`` of one party."""

    subsets: tuple[tuple[np.ndarray, ...], ...]

    @property
    def s(self) -> int:
        return len(self.subsets)

    @property
    def t(self) -> int:
        return len(self.subsets[0]) if self.subsets else 0


def make_local_split(local_size: int, s: int, t: int, rng: np.random.Generator) -> LocalSplit:
    """``s`` independent partitions, each a fresh shuffle cut into ``t`` near-equal subsets."""
    if s < 1 or t < 1:
        raise PartitionError("s and t must be >= 1")
    if local_size < t:
        raise PartitionError(f"party too small for t subsets ({local_size} examples, t={t})")
    return LocalSplit(
        tuple(
            tuple(np.array_split(rng.permutation(local_size), t))
            for _ in range(s)
        )
    )
