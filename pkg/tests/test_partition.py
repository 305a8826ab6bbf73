import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fedkt import Dataset, make_rng
from fedkt.partition import (
    PartitionError,
    dirichlet_partition,
    homogeneous_partition,
    largest_remainder,
    make_local_split,
)


def _labelled(counts):
    y = np.concatenate([np.full(c, k) for k, c in enumerate(counts)])
    return Dataset(np.arange(len(y), dtype=float).reshape(-1, 1), y, len(counts))


def _cover(layout, total):
    allidx = np.concatenate(layout.party_indices)
    return len(allidx) == total and set(allidx.tolist()) == set(range(total))


def test_single_party_holds_everything():
    layout = dirichlet_partition(_labelled([100]), 1, 0.3, make_rng(0))
    assert layout.sizes() == [100]


def test_insufficient_data():
    with pytest.raises(PartitionError, match="insufficient data"):
        dirichlet_partition(_labelled([3]), 5, 0.5, make_rng(0))


def test_large_beta_is_near_uniform():
    data = _labelled([400])
    ok = 0
    for seed in range(100):
        sizes = np.array(dirichlet_partition(data, 4, 1e6, make_rng(seed)).sizes())
        ok += np.max(np.abs(sizes - 100)) <= 2
    assert ok >= 95


def test_dirichlet_marginals_match_beta_distribution():
    # party 0's share of class 0 ~ Beta(beta, (n-1) beta); many examples per
    # class keep rounding effects far below the KS resolution
    per_class = 20_000
    data = _labelled([per_class] * 10)
    shares = []
    for seed in range(200):
        layout = dirichlet_partition(data, 10, 0.5, make_rng(seed))
        shares.append(np.sum(data.y[layout.party_indices[0]] == 0) / per_class)
    p = stats.kstest(shares, stats.beta(0.5, 4.5).cdf).pvalue
    assert p > 0.01


def test_dirichlet_bit_identical_per_seed():
    data = _labelled([30, 50, 20])
    a = dirichlet_partition(data, 6, 0.5, make_rng(3))
    b = dirichlet_partition(data, 6, 0.5, make_rng(3))
    assert all(np.array_equal(x, y) for x, y in zip(a.party_indices, b.party_indices))


@given(
    counts=st.lists(st.integers(0, 40), min_size=1, max_size=5).filter(lambda c: sum(c) >= 1),
    n=st.integers(1, 8),
    beta=st.floats(0.05, 10.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_dirichlet_cover_disjoint_nonempty(counts, n, beta, seed):
    data = _labelled(counts)
    if len(data) < n:
        with pytest.raises(PartitionError):
            dirichlet_partition(data, n, beta, make_rng(seed))
        return
    layout = dirichlet_partition(data, n, beta, make_rng(seed))
    assert _cover(layout, len(data))
    assert min(layout.sizes()) >= 1


def test_dirichlet_min_size_redraws():
    data = _labelled([300, 200])
    # at beta=0.1 a single draw almost always starves some party
    assert any(min(dirichlet_partition(data, 10, 0.1, make_rng(s)).sizes()) < 5 for s in range(5))
    for seed in range(5):
        layout = dirichlet_partition(data, 10, 0.1, make_rng(seed), min_size=5)
        assert _cover(layout, len(data)) and min(layout.sizes()) >= 5


def test_dirichlet_min_size_errors():
    with pytest.raises(PartitionError, match="insufficient"):
        dirichlet_partition(_labelled([20]), 5, 0.5, make_rng(0), min_size=5)
    with pytest.raises(PartitionError, match="no draw"):
        dirichlet_partition(_labelled([30]), 6, 0.01, make_rng(0), min_size=5, max_draws=3)


def test_homogeneous_examples():
    layout = homogeneous_partition(_labelled([10]), 10, make_rng(0))
    assert layout.sizes() == [1] * 10 and _cover(layout, 10)
    assert sorted(homogeneous_partition(_labelled([11]), 2, make_rng(0)).sizes()) == [5, 6]
    with pytest.raises(PartitionError):
        homogeneous_partition(_labelled([3]), 4, make_rng(0))


@given(total=st.integers(1, 200), n=st.integers(1, 20), seed=st.integers(0, 1000))
def test_homogeneous_cover_and_balance(total, n, seed):
    if n > total:
        return
    layout = homogeneous_partition(_labelled([total]), n, make_rng(seed))
    assert _cover(layout, total)
    assert max(layout.sizes()) - min(layout.sizes()) <= 1


def test_local_split_paper_defaults():
    split = make_local_split(10, 2, 5, make_rng(0))
    assert split.s == 2 and split.t == 5
    for part in split.subsets:
        assert [len(x) for x in part] == [2] * 5
        assert sorted(np.concatenate(part).tolist()) == list(range(10))


def test_local_split_identity_and_error():
    split = make_local_split(10, 1, 1, make_rng(0))
    assert sorted(split.subsets[0][0].tolist()) == list(range(10))
    with pytest.raises(PartitionError, match="party too small for t subsets"):
        make_local_split(4, 1, 5, make_rng(0))


@given(size=st.integers(1, 120), s=st.integers(1, 4), t=st.integers(1, 10), seed=st.integers(0, 999))
def test_local_split_invariants(size, s, t, seed):
    if size < t:
        return
    split = make_local_split(size, s, t, make_rng(seed))
    for part in split.subsets:
        lens = [len(x) for x in part]
        assert min(lens) >= 1 and max(lens) - min(lens) <= 1
        allidx = np.concatenate(part)
        assert len(allidx) == size and len(set(allidx.tolist())) == size


@given(w=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10).filter(lambda w: sum(w) > 0),
       total=st.integers(0, 1000))
def test_largest_remainder_preserves_total(w, total):
    c = largest_remainder(w, total)
    assert c.sum() == total and np.all(c >= 0)
    exact = np.asarray(w) / sum(w) * total
    assert np.all(np.abs(c - exact) < 1.0 + 1e-9)


def test_summary_reports_class_histograms():
    data = _labelled([5, 5])
    s = homogeneous_partition(data, 2, make_rng(0)).summary(data)
    assert s["scheme"] == "homogeneous"
    assert np.sum(s["class_histograms"], axis=0).tolist() == [5, 5]
