"""Two-tier knowledge transfer: teachers -> students on each party, students ->
final model on the server, with Laplace noise on one tier per privacy level."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import privacy
from .domain import Dataset, PrivacyLevel, VoteHistogram, make_rng
from .models import Classifier, ModelSpec, fit
from .partition import make_local_split

# role tags for derived rng streams
ROLE_SPLIT, ROLE_TEACHER, ROLE_STUDENT, ROLE_PARTY_NOISE = 1, 2, 3, 4
ROLE_QUERIES, ROLE_SERVER_NOISE, ROLE_FINAL = 5, 6, 7
SERVER = 1_000_000  # pseudo party index for server-side streams


class TransferError(RuntimeError):
    pass


@dataclass(frozen=True)
class FedKtConfig:
    n: int
    s: int = 2
    t: int = 5
    num_classes: Optional[int] = None
    gamma: Optional[float] = None
    level: PrivacyLevel = PrivacyLevel.L0
    query_fraction: float = 1.0
    teacher_spec: ModelSpec = field(default_factory=ModelSpec)
    student_spec: ModelSpec = field(default_factory=ModelSpec)
    final_spec: ModelSpec = field(default_factory=ModelSpec)
    seed: int = 0
    delta: float = 1e-5
    consistent_voting: bool = True
    max_order: int = privacy.DEFAULT_MAX_ORDER

    def __post_init__(self):
        object.__setattr__(self, "level", PrivacyLevel.parse(self.level))
        if min(self.n, self.s, self.t) < 1:
            raise ValueError("n, s and t must all be >= 1")
        if not 0.0 < self.query_fraction <= 1.0:
            raise ValueError("query_fraction must lie in (0, 1]")
        if self.level is not PrivacyLevel.L0 and not (self.gamma is not None and self.gamma > 0):
            raise ValueError("gamma > 0 is required at privacy levels L1 and L2")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def noise_gamma(self) -> Optional[float]:
        return None if self.level is PrivacyLevel.L0 else self.gamma

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "s": self.s,
            "t": self.t,
            "num_classes": self.num_classes,
            "gamma": self.gamma,
            "level": self.level.value,
            "query_fraction": self.query_fraction,
            "teacher_spec": self.teacher_spec.to_dict(),
            "student_spec": self.student_spec.to_dict(),
            "final_spec": self.final_spec.to_dict(),
            "seed": self.seed,
            "delta": self.delta,
            "consistent_voting": self.consistent_voting,
            "max_order": self.max_order,
        }


@dataclass(frozen=True)
class TransferRecord:
    query: int
    histogram: VoteHistogram
    label: int
    gap: float
    flagged: bool = False


class TransferRecords:
    """Answered queries of one knowledge-transfer step, stored column-wise.

    ``hists`` are the clean (pre-noise) vote counts; ``flagged`` marks queries
    whose clean histogram was all zero.
    """

    def __init__(self, queries, hists, labels, flagged=None):
        self.queries = np.asarray(queries, dtype=np.int64)
        self.hists = np.asarray(hists, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.flagged = (
            np.zeros(len(self.labels), dtype=bool) if flagged is None else np.asarray(flagged, dtype=bool)
        )

    def __len__(self):
        return len(self.labels)

    @property
    def gaps(self) -> np.ndarray:
        if self.hists.shape[1] < 2:
            return np.zeros(len(self))
        top2 = np.sort(self.hists, axis=1)[:, -2:]
        return top2[:, 1] - top2[:, 0]

    def __getitem__(self, i) -> TransferRecord:
        return TransferRecord(
            int(self.queries[i]), VoteHistogram(self.hists[i]), int(self.labels[i]),
            float(self.gaps[i]), bool(self.flagged[i]),
        )

    def __iter__(self) -> Iterator[TransferRecord]:
        for i in range(len(self)):
            yield self[i]


def vote_matrix(models: Sequence[Classifier], X: np.ndarray, num_classes: int) -> np.ndarray:
    """``counts[q, m]`` = number of models predicting class ``m`` on row ``q``."""
    if not models:
        raise ValueError("need at least one model")
    counts = np.zeros((len(X), num_classes), dtype=np.int64)
    rows = np.arange(len(X))
    for model in models:
        counts[rows, model.predict(X)] += 1
    return counts


def ensemble_votes(models: Sequence[Classifier], x, num_classes: int) -> VoteHistogram:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return VoteHistogram(vote_matrix(models, x, num_classes)[0], num_classes)


def noisy_argmax(hist, gamma: Optional[float], rng: Optional[np.random.Generator] = None) -> int:
    """argmax of the counts plus i.i.d. Laplace(0, 1/gamma); plain argmax
    (smallest id on ties) when ``gamma`` is None."""
    counts = hist.counts if isinstance(hist, VoteHistogram) else np.asarray(hist, dtype=np.float64)
    return int(noisy_argmax_batch(counts.reshape(1, -1), gamma, rng)[0])


def noisy_argmax_batch(counts: np.ndarray, gamma: Optional[float], rng: Optional[np.random.Generator] = None) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if gamma is None:
        return np.argmax(counts, axis=1)
    if rng is None:
        raise ValueError("noisy argmax needs an rng")
    return np.argmax(counts + privacy.sample_laplace(1.0 / gamma, rng, counts.shape), axis=1)


def consistent_vote(predictions, s: int, num_classes: int) -> VoteHistogram:
    """Server histogram for one query from an ``n x s`` matrix of student labels.

    A party adds ``s`` votes to class ``m`` only when all of its students say ``m``.
    """
    P = np.asarray(predictions, dtype=np.int64).reshape(-1, s)
    return VoteHistogram(consistent_vote_matrix(P[:, :, None], num_classes)[0], num_classes)


def consistent_vote_matrix(predictions: np.ndarray, num_classes: int) -> np.ndarray:
    """Batched form: ``predictions`` is ``n x s x Q``; returns ``Q x u`` counts."""
    P = np.asarray(predictions, dtype=np.int64)
    n, s, Q = P.shape
    agree = np.all(P == P[:, :1, :], axis=1)  # n x Q
    counts = np.zeros((Q, num_classes), dtype=np.int64)
    parties, queries = np.nonzero(agree)
    np.add.at(counts, (queries, P[parties, 0, queries]), s)
    return counts


def plain_vote_matrix(predictions: np.ndarray, num_classes: int) -> np.ndarray:
    """Sum of all student votes (no consistency filter); ``n x s x Q`` -> ``Q x u``."""
    P = np.asarray(predictions, dtype=np.int64)
    Q = P.shape[2]
    flat = P.transpose(2, 0, 1).reshape(Q, -1)
    counts = np.zeros((Q, num_classes), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(Q), flat.shape[1]), flat.reshape(-1)), 1)
    return counts


def select_queries(aux_size: int, fraction: float, seed: int) -> np.ndarray:
    """First ``ceil(fraction * |aux|)`` positions of a seeded shuffle of the public set."""
    k = math.ceil(fraction * aux_size - 1e-9)
    if k < 1:
        raise TransferError("no queries answered: query_fraction selects zero public examples")
    return make_rng(seed, SERVER, ROLE_QUERIES).permutation(aux_size)[:k]


def _tier_queries(cfg: FedKtConfig, aux_size: int) -> tuple[np.ndarray, np.ndarray]:
    """(party-tier queries, server-tier queries); the fraction applies to the noisy tier."""
    chosen = select_queries(aux_size, cfg.query_fraction, cfg.seed)
    everything = select_queries(aux_size, 1.0, cfg.seed)
    if cfg.level is PrivacyLevel.L1:
        return everything, chosen
    if cfg.level is PrivacyLevel.L2:
        return chosen, everything
    return chosen, chosen


@dataclass
class PartyResult:
    students: list[Classifier]
    records: list[TransferRecords]
    subset_sizes: list[list[int]]


def train_party_students(
    local: Dataset,
    aux: Dataset,
    cfg: FedKtConfig,
    party: int = 0,
    queries: Optional[np.ndarray] = None,
) -> PartyResult:
    """Party tier for one party: ``s`` partitions of ``t`` teachers, each
    distilled into a student on the public queries.

    Noise is added to the teacher votes only at level L2. Randomness comes from
    streams keyed by ``(cfg.seed, party, partition, role)``.
    """
    if len(aux) == 0:
        raise TransferError("public dataset is empty")
    u = local.num_classes
    if queries is None:
        queries = _tier_queries(cfg, len(aux))[0]
    Xq = np.asarray(aux.X)[queries]
    split = make_local_split(len(local), cfg.s, cfg.t, make_rng(cfg.seed, party, 0, ROLE_SPLIT))
    gamma = cfg.noise_gamma if cfg.level is PrivacyLevel.L2 else None
    students, records, sizes = [], [], []
    for j, subsets in enumerate(split.subsets):
        teachers = [
            fit(cfg.teacher_spec, local.subset(ix), make_rng(cfg.seed, party, j, ROLE_TEACHER, k))
            for k, ix in enumerate(subsets)
        ]
        counts = vote_matrix(teachers, Xq, u)
        labels = noisy_argmax_batch(counts, gamma, make_rng(cfg.seed, party, j, ROLE_PARTY_NOISE))
        student = fit(
            cfg.student_spec,
            Dataset(Xq, labels, u),
            make_rng(cfg.seed, party, j, ROLE_STUDENT),
        )
        students.append(student)
        records.append(TransferRecords(queries, counts, labels))
        sizes.append([len(ix) for ix in subsets])
    return PartyResult(students, records, sizes)


@dataclass
class FedKtResult:
    final: Classifier
    students: list[list[Classifier]]
    party_records: list[list[TransferRecords]]
    server_records: TransferRecords
    privacy: Optional[privacy.PrivacyReport]
    communication: dict
    subset_sizes: list[list[list[int]]]
    config: FedKtConfig
    extra_privacy: dict = field(default_factory=dict)

    def report(self, test: Optional[Dataset] = None) -> dict:
        """JSON-ready summary; raw gaps are only emitted at L0."""
        gaps = self.server_records.gaps
        if self.config.level is PrivacyLevel.L0:
            gap_stats = {"raw": gaps.tolist()}
        else:
            gap_stats = {"histogram": _int_histogram(gaps)}
        party_gaps = np.concatenate([r.gaps for pr in self.party_records for r in pr])
        out = {
            "config": self.config.to_dict(),
            "party_subset_sizes": self.subset_sizes,
            "server_gap_stats": {
                **gap_stats,
                "mean": float(gaps.mean()) if len(gaps) else 0.0,
                "flagged_all_zero": int(self.server_records.flagged.sum()),
            },
            "party_gap_stats": {
                "histogram": _int_histogram(party_gaps),
                "mean": float(party_gaps.mean()) if len(party_gaps) else 0.0,
            },
            "privacy": self.privacy.to_dict() if self.privacy else {"level": "L0"},
            "communication": self.communication,
        }
        if self.extra_privacy:
            out["privacy_non_default"] = self.extra_privacy
        if test is not None and test.y is not None:
            out["final_test_accuracy"] = self.final.accuracy(test.X, test.y)
        return out


def _int_histogram(values: np.ndarray) -> dict:
    if len(values) == 0:
        return {}
    keys, counts = np.unique(np.round(values).astype(np.int64), return_counts=True)
    return {str(int(k)): int(c) for k, c in zip(keys, counts)}


def communication_summary(students: list[list[Classifier]], fedavg_rounds: int = 10) -> dict:
    sizes = [m.serialized_size() for party in students for m in party]
    n = len(students)
    mean = float(np.mean(sizes))
    return {
        "student_bytes_total": int(sum(sizes)),
        "n_models_sent": len(sizes),
        "mean_student_bytes": mean,
        "fedavg_rounds": fedavg_rounds,
        "fedavg_bytes": 2 * n * mean * fedavg_rounds,
    }


def run_fedkt(parties: Sequence[Dataset], aux: Dataset, cfg: FedKtConfig, fedavg_rounds: int = 10) -> FedKtResult:
    """Full protocol: party tier for every party, then the server tier and the final model."""
    if len(parties) != cfg.n:
        raise ValueError(f"config says n={cfg.n} but {len(parties)} parties were given")
    u = parties[0].num_classes
    if cfg.num_classes is not None and cfg.num_classes != u:
        raise ValueError("config num_classes disagrees with the data")
    party_q, server_q = _tier_queries(cfg, len(aux))

    results = [train_party_students(local, aux, cfg, i, party_q) for i, local in enumerate(parties)]
    students = [r.students for r in results]

    Xs = np.asarray(aux.X)[server_q]
    preds = np.stack([np.stack([m.predict(Xs) for m in party]) for party in students])  # n x s x Q
    if cfg.consistent_voting:
        counts = consistent_vote_matrix(preds, u)
    else:
        counts = plain_vote_matrix(preds, u)
    gamma = cfg.noise_gamma if cfg.level is PrivacyLevel.L1 else None
    labels = noisy_argmax_batch(counts, gamma, make_rng(cfg.seed, SERVER, 0, ROLE_SERVER_NOISE))
    flagged = counts.sum(axis=1) == 0
    server_records = TransferRecords(server_q, counts, labels, flagged)
    final = fit(cfg.final_spec, Dataset(Xs, labels, u), make_rng(cfg.seed, SERVER, 0, ROLE_FINAL))

    report = None
    extra = {}
    if cfg.level is PrivacyLevel.L1:
        report = privacy.account_l1(counts, cfg.s, cfg.gamma, cfg.delta, cfg.max_order)
        if not cfg.consistent_voting:
            z = privacy.compute_z([r.records for r in results])
            extra["example_level_l1"] = privacy.account_l1_example(
                counts, z, cfg.gamma, cfg.delta, cfg.max_order
            ).to_dict()
    elif cfg.level is PrivacyLevel.L2:
        per_party = [np.concatenate([rec.hists for rec in r.records]) for r in results]
        report = privacy.account_l2(per_party, cfg.gamma, cfg.delta, t=cfg.t, max_order=cfg.max_order)

    return FedKtResult(
        final=final,
        students=students,
        party_records=[r.records for r in results],
        server_records=server_records,
        privacy=report,
        communication=communication_summary(students, fedavg_rounds),
        subset_sizes=[r.subset_sizes for r in results],
        config=cfg,
        extra_privacy=extra,
    )
