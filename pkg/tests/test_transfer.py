import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedkt import Dataset, FedKtConfig, ModelSpec, PrivacyLevel, VoteHistogram, make_rng, run_fedkt
from fedkt.harness.data import make_blobs
from fedkt.models import ConstantClassifier, fit
from fedkt.partition import homogeneous_partition
from fedkt.transfer import (
    TransferError,
    consistent_vote,
    consistent_vote_matrix,
    ensemble_votes,
    noisy_argmax,
    noisy_argmax_batch,
    plain_vote_matrix,
    select_queries,
    train_party_students,
)

from oracles import laplace_two_class_win

TREE = ModelSpec("decision_tree", max_depth=4)


def _const(label, u=3, dim=2):
    return ConstantClassifier(u, dim, label)


def test_ensemble_votes_examples():
    x = np.zeros(2)
    assert ensemble_votes([_const(1)] * 5, x, 3) == VoteHistogram([0, 5, 0])
    assert ensemble_votes([_const(c) for c in (0, 0, 1, 2, 2)], x, 3) == VoteHistogram([2, 1, 2])
    assert ensemble_votes([_const(1, u=2)], x, 2) == VoteHistogram([0, 1])
    with pytest.raises(ValueError):
        ensemble_votes([], x, 2)


def test_noisy_argmax_without_noise():
    assert noisy_argmax(VoteHistogram([0, 5, 0]), None) == 1
    assert noisy_argmax(VoteHistogram([3, 3]), None) == 0


def test_noisy_argmax_monte_carlo_against_exact():
    draws = noisy_argmax_batch(np.tile([5.0, 0.0], (100_000, 1)), 2.0, make_rng(0))
    p_hat = np.mean(draws == 0)
    p = float(laplace_two_class_win(5, 2.0))
    se = np.sqrt(p * (1 - p) / 100_000)
    assert p_hat >= 0.99
    assert abs(p_hat - p) <= 5 * se + 1e-6


def test_noisy_argmax_needs_rng():
    with pytest.raises(ValueError):
        noisy_argmax([1.0, 0.0], 1.0)


def test_consistent_vote_examples():
    assert consistent_vote([[0, 0], [0, 1], [1, 1]], 2, 2) == VoteHistogram([2, 2])
    assert consistent_vote([[0, 0]] * 4, 2, 3) == VoteHistogram([8, 0, 0])
    assert consistent_vote([[0, 1], [1, 0], [2, 1]], 2, 3) == VoteHistogram([0, 0, 0])


@given(n=st.integers(1, 6), s=st.integers(1, 4), u=st.integers(2, 4), q=st.integers(1, 20), seed=st.integers(0, 999))
def test_consistent_vote_matrix_structure(n, s, u, q, seed):
    P = np.random.default_rng(seed).integers(0, u, size=(n, s, q))
    counts = consistent_vote_matrix(P, u)
    consistent = np.all(P == P[:, :1, :], axis=1).sum(axis=0)
    assert np.all(counts % s == 0)
    assert np.array_equal(counts.sum(axis=1), s * consistent)
    assert np.array_equal(plain_vote_matrix(P, u).sum(axis=1), np.full(q, n * s))
    for j in range(q):
        assert consistent_vote(P[:, :, j], s, u) == VoteHistogram(counts[j])


def test_select_queries():
    q = select_queries(100, 0.01, 0)
    assert len(q) == 1
    assert np.array_equal(select_queries(100, 0.3, 5), select_queries(100, 0.3, 5))
    assert sorted(select_queries(10, 1.0, 0).tolist()) == list(range(10))
    with pytest.raises(TransferError, match="no queries answered"):
        select_queries(0, 0.5, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        FedKtConfig(n=0)
    with pytest.raises(ValueError):
        FedKtConfig(n=1, query_fraction=0.0)
    with pytest.raises(ValueError):
        FedKtConfig(n=1, level="L1")
    FedKtConfig(n=1, level="L1", gamma=0.1)


def _toy(n_parties=3, seed=0, size=240):
    data = make_blobs(size, num_classes=3, rng=np.random.default_rng(seed))
    aux = make_blobs(60, num_classes=3, rng=np.random.default_rng(seed + 100)).unlabeled()
    layout = homogeneous_partition(data, n_parties, make_rng(seed))
    return layout.party_datasets(data), aux


def test_single_teacher_distillation_labels():
    parties, aux = _toy(1)
    cfg = FedKtConfig(n=1, s=1, t=1, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    res = train_party_students(parties[0], aux, cfg)
    teacher = fit(TREE, parties[0], make_rng(cfg.seed, 0, 0, 2, 0))
    rec = res.records[0]
    assert np.array_equal(rec.labels, teacher.predict(aux.X[rec.queries]))


def test_l2_records_are_clean_integers():
    parties, aux = _toy(2)
    cfg = FedKtConfig(n=2, s=2, t=3, level="L2", gamma=0.05, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    res = train_party_students(parties[0], aux, cfg)
    assert len(res.students) == 2
    for rec in res.records:
        assert np.all(rec.hists == np.round(rec.hists)) and np.all(rec.hists.sum(axis=1) == 3)
    # at this noise level some labels disagree with the clean argmax
    noisy = np.concatenate([r.labels for r in res.records])
    clean = np.concatenate([r.hists.argmax(axis=1) for r in res.records])
    assert np.any(noisy != clean)


def test_degenerate_two_tier_is_one_tier():
    parties, aux = _toy(1)
    cfg = FedKtConfig(n=1, s=1, t=1, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    res = run_fedkt(parties, aux, cfg)
    student = res.students[0][0]
    assert np.array_equal(res.server_records.labels, student.predict(aux.X[res.server_records.queries]))


def test_communication_is_nsm():
    parties, aux = _toy(3)
    cfg = FedKtConfig(n=3, s=2, t=2, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    res = run_fedkt(parties, aux, cfg)
    sizes = [m.serialized_size() for p in res.students for m in p]
    comm = res.communication
    assert comm["n_models_sent"] == 6
    assert comm["student_bytes_total"] == sum(sizes)
    assert comm["fedavg_bytes"] == pytest.approx(2 * 3 * np.mean(sizes) * comm["fedavg_rounds"])


def test_gaps_consistent_with_histograms():
    parties, aux = _toy(3)
    res = run_fedkt(parties, aux, FedKtConfig(n=3, s=2, t=2, teacher_spec=TREE, student_spec=TREE, final_spec=TREE))
    for rec in list(res.server_records) + [r for p in res.party_records for recs in p for r in recs]:
        s = np.sort(rec.histogram.counts)
        assert rec.gap == s[-1] - s[-2]


def test_all_zero_server_histogram_is_flagged():
    parties, aux = _toy(3)
    res = run_fedkt(parties, aux, FedKtConfig(n=3, s=2, t=2, teacher_spec=TREE, student_spec=TREE, final_spec=TREE))
    zero = res.server_records.hists.sum(axis=1) == 0
    assert np.array_equal(zero, res.server_records.flagged)
    assert np.all(res.server_records.labels[zero] == 0)


def test_report_hides_raw_gaps_under_noise():
    parties, aux = _toy(2)
    cfg = FedKtConfig(n=2, s=1, t=2, level="L1", gamma=0.5, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    rep = run_fedkt(parties, aux, cfg).report()
    assert "raw" not in rep["server_gap_stats"] and "histogram" in rep["server_gap_stats"]
    assert rep["privacy"]["level"] == "L1" and "warning" in rep["privacy"]


def test_party_count_mismatch():
    parties, aux = _toy(2)
    with pytest.raises(ValueError):
        run_fedkt(parties, aux, FedKtConfig(n=3))


def test_example_level_l1_only_without_consistent_voting():
    parties, aux = _toy(2)
    base = dict(n=2, s=2, t=2, level="L1", gamma=0.5, teacher_spec=TREE, student_spec=TREE, final_spec=TREE)
    assert not run_fedkt(parties, aux, FedKtConfig(**base)).extra_privacy
    res = run_fedkt(parties, aux, FedKtConfig(**base, consistent_voting=False))
    assert res.extra_privacy["example_level_l1"]["adjacency"] == "example"
