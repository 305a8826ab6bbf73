import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedkt import make_rng
from fedkt import privacy as P
from fedkt.transfer import TransferRecord

import oracles

LN_INV_DELTA = math.log(1e5)


def test_laplace_moments():
    x = P.sample_laplace(1.0, make_rng(0), 1_000_000)
    assert abs(x.mean()) <= 0.005
    assert abs(x.var() - 2.0) <= 0.02
    assert abs(np.mean(np.abs(x) <= math.log(2)) - 0.5) <= 0.01


def test_laplace_scale_must_be_positive():
    with pytest.raises(ValueError):
        P.sample_laplace(0.0, make_rng(0))


def test_pure_dp_values():
    assert P.pure_dp_epsilon_l1(2, 0.04) == pytest.approx(0.16)
    assert P.pure_dp_epsilon_l1(1, 0.3) == pytest.approx(0.6)
    assert P.pure_dp_epsilon_l2_party(25, 0.04) == pytest.approx(2.0)
    assert P.pure_dp_epsilon_l2_party(1, 0.3) == pytest.approx(0.6)
    assert P.pure_dp_epsilon_l2_party(6, 0.1) > P.pure_dp_epsilon_l2_party(5, 0.1)
    with pytest.raises(ValueError):
        P.pure_dp_epsilon_l1(2, 0.0)


def test_gap_failure_bound_examples():
    assert P.gap_failure_bound([10, 0], 0.1) == pytest.approx(3 / (4 * math.e), rel=1e-12)
    assert P.gap_failure_bound([10, 0], 0.1) == pytest.approx(0.27591, abs=5e-6)
    assert P.gap_failure_bound([5, 5], 0.7) == 0.5
    assert P.gap_failure_bound([10, 0, 0], 0.1) == pytest.approx(0.55182, abs=1e-5)
    assert P.gap_failure_bound([0, 0, 0, 0], 0.1) == 1.0
    with pytest.raises(ValueError):
        P.gap_failure_bound([3], 0.1)


@given(st.lists(st.integers(0, 30), min_size=2, max_size=5), st.floats(0.01, 1.0))
def test_gap_failure_bound_matches_oracle(counts, gamma):
    got = P.gap_failure_bound(counts, gamma)
    want = float(oracles.gap_bound(counts, gamma))
    assert got == pytest.approx(want, rel=1e-12, abs=1e-300)
    assert 0.0 <= got <= 1.0


def test_moment_bound_examples():
    assert P.moments_bound_l1_party_level(0.0, 2, 0.04, 8) == 0.0
    # q above threshold: data-independent branch alone
    assert P.moments_bound_l1_party_level(0.9, 1, 0.05, 1) == pytest.approx(0.01, rel=1e-12)
    q, s, g, lam = 0.01, 2, 0.04, 8
    dep = math.log(0.99 * (0.99 / (1 - math.exp(0.16) * 0.01)) ** 8 + 0.01 * math.exp(1.28))
    indep = 2 * s * s * g * g * lam * (lam + 1)
    assert P.moments_bound_l1_party_level(q, s, g, lam) == pytest.approx(min(dep, indep), rel=1e-12)
    assert P.moments_bound_l2_example_level(0.9, 0.05, 1) == pytest.approx(0.01)
    assert P.moments_bound_l2_example_level(0.0, 0.05, 3) == 0.0
    assert P.moments_bound_l1_example_level(0.3, 0, 0.1, 5) == 0.0
    assert P.moments_bound_l1_example_level(0.9, 1, 0.05, 1) == pytest.approx(0.01)
    assert P.moments_bound_l2_party_level(0.9, 5, 0.05, 1) == pytest.approx(0.25)
    assert P.moments_bound_l2_party_level(0.0, 5, 0.05, 1) == 0.0


@given(
    q=st.floats(0.0, 1.0),
    k=st.integers(1, 30),
    gamma=st.floats(1e-3, 1.0),
    lam=st.integers(1, 64),
)
def test_bound_never_exceeds_data_independent_branch(q, k, gamma, lam):
    a = P.moments_bound_l2_party_level(q, k, gamma, lam)
    assert 0.0 <= a <= 2 * k * k * gamma * gamma * lam * (lam + 1) * (1 + 1e-12)


@given(q=st.floats(0.0, 1.0), s=st.integers(1, 8), gamma=st.floats(1e-3, 1.0), lam=st.integers(1, 64))
def test_formula_identities(q, s, gamma, lam):
    assert P.moments_bound_l2_example_level(q, gamma, lam) == P.moments_bound_l1_party_level(q, 1, gamma, lam)
    assert P.moments_bound_l2_party_level(q, 1, gamma, lam) == P.moments_bound_l2_example_level(q, gamma, lam)
    assert P.moments_bound_l1_example_level(q, s, gamma, lam) == P.moments_bound_l1_party_level(q, s, gamma, lam)


@given(q=st.floats(0.0, 0.5), k=st.integers(1, 10), gamma=st.floats(1e-3, 0.5), lam=st.integers(1, 64))
def test_moment_bound_matches_oracle(q, k, gamma, lam):
    got = P.moments_bound_l2_party_level(q, k, gamma, lam)
    want = oracles.moment_bound(q, k, gamma, lam)
    assert abs(got - float(want)) <= 1e-10 * max(abs(float(want)), 1e-300)


def test_vectorised_orders_match_scalar():
    lam = P.orders()
    vec = P.moments_bound_l1_party_level(0.001, 2, 0.04, lam)
    assert np.allclose(vec, [P.moments_bound_l1_party_level(0.001, 2, 0.04, int(l)) for l in lam], rtol=0, atol=0)


def test_compute_z_examples():
    assert P.compute_z([[[2, 3], [4]], [[5], [2]]]) == 0
    assert P.compute_z([[[1, 5], [0]], [[3], [3]]]) == 2
    assert P.compute_z([[[2, 1], [3, 3]]]) == 1
    recs = [[[TransferRecord(0, None, 0, 1.0)], [TransferRecord(0, None, 0, 4.0)]]]
    assert P.compute_z(recs) == 1


def test_to_epsilon_example():
    lam = P.orders()
    ledger = P.MomentVector(0.005 * lam * (lam + 1))
    eps, lam_star = P.to_epsilon(ledger, 1e-5)
    want, want_lam = oracles.epsilon_from_moments(0.005 * lam * (lam + 1), 1e-5)
    assert lam_star == want_lam == 48
    assert eps == pytest.approx(float(want), rel=1e-12)
    assert eps == pytest.approx(0.485, abs=5e-4)


def test_to_epsilon_zero_ledger():
    eps, lam = P.to_epsilon(P.MomentVector(), 1e-5)
    assert eps == pytest.approx(LN_INV_DELTA / 64) and lam == 64


def test_to_epsilon_rejects_bad_delta():
    with pytest.raises(ValueError):
        P.to_epsilon(P.MomentVector(), 1.0)


alphas = st.lists(st.floats(0.0, 50.0), min_size=64, max_size=64).map(lambda a: P.MomentVector(a))


@given(alphas, st.floats(1e-12, 0.5), st.floats(1e-12, 0.5))
def test_to_epsilon_non_increasing_in_delta(ledger, d1, d2):
    lo, hi = sorted((d1, d2))
    assert P.to_epsilon(ledger, hi)[0] <= P.to_epsilon(ledger, lo)[0]


@given(alphas, st.integers(1, 50))
def test_accumulate_k_identical(vec, k):
    acc = P.MomentVector()
    for _ in range(k):
        acc = P.accumulate(acc, vec)
    assert np.allclose(acc.alpha, k * vec.alpha, rtol=1e-12, atol=0)


@given(alphas, alphas)
def test_accumulate_commutes_and_zero_is_identity(a, b):
    assert np.array_equal(P.accumulate(a, b).alpha, P.accumulate(b, a).alpha)
    assert np.array_equal(P.accumulate(a, P.MomentVector()).alpha, a.alpha)
    assert np.array_equal((a + b).alpha, a.alpha + b.alpha)


def test_accumulate_length_mismatch():
    with pytest.raises(ValueError):
        P.accumulate(P.MomentVector(max_order=10), P.MomentVector())


def test_moment_vector_rejects_negative():
    with pytest.raises(ValueError):
        P.MomentVector([-1.0])


@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=20), st.randoms())
def test_parallel_compose_is_max_and_order_free(eps, rnd):
    shuffled = list(eps)
    rnd.shuffle(shuffled)
    assert P.parallel_compose(eps, 1e-5) == (max(eps), 1e-5)
    assert P.parallel_compose(shuffled, 1e-5)[0] == max(eps)


def test_parallel_compose_examples():
    assert P.parallel_compose([1.0, 2.5, 0.3], 1e-5)[0] == 2.5
    assert P.parallel_compose([0.7], 1e-5)[0] == 0.7
    with pytest.raises(ValueError):
        P.parallel_compose([], 1e-5)


def test_advanced_composition_reference():
    assert P.advanced_composition_reference(0.1, 1, 1e-5) == pytest.approx(0.4904, abs=5e-5)
    assert P.advanced_composition_reference(0.1, 1, 1e-5) == pytest.approx(
        float(oracles.strong_composition(0.1, 1, 1e-5)), rel=1e-12
    )
    # sqrt(k) growth for tiny eps0
    e = [P.advanced_composition_reference(1e-4, k, 1e-5) for k in (100, 400)]
    assert e[1] / e[0] == pytest.approx(2.0, rel=1e-3)


def test_moments_beat_advanced_composition_on_high_gap_streams():
    rng = np.random.default_rng(0)
    t, gamma = 10, 0.05
    for _ in range(100):
        k = int(rng.integers(50, 500))
        gaps = rng.integers(t // 2, t + 1, size=k)
        hists = np.column_stack([gaps, np.zeros(k)])
        eps = P.account_stream(hists, 2 * gamma, gamma).epsilon(1e-5)[0]
        assert eps < P.advanced_composition_reference(2 * gamma, k, 1e-5)


def test_ledger_counts_data_dependent_queries():
    ledger = P.account_stream([[50, 0], [1, 1]], 0.2, 0.1)
    assert ledger.queries == 2 and ledger.data_dependent == 1


def test_account_l2_is_worst_party():
    parties = [np.array([[5, 0]] * 10), np.array([[1, 0]] * 30)]
    rep = P.account_l2(parties, 0.1, 1e-5, t=5)
    single = [P.account_l2([p], 0.1, 1e-5).epsilon for p in parties]
    assert rep.epsilon == max(single) and rep.party_epsilons == single
    assert rep.queries_answered == 40
    assert rep.to_dict()["party_level_epsilon"] >= rep.epsilon


def test_report_fields():
    rep = P.account_l1([[8, 0], [4, 4]], 2, 0.05, 1e-5)
    d = rep.to_dict()
    for key in ("level", "gamma", "queries_answered", "epsilon", "delta", "lambda_star", "data_dependent_fraction"):
        assert key in d
    assert d["warning"] == P.DATA_DEPENDENT_BANNER
    assert 0.0 <= d["data_dependent_fraction"] <= 1.0


def test_huge_gamma_does_not_overflow():
    assert P.gap_failure_bound([10, 0, 3], 1e9) == 0.0
    assert P.data_dependent_threshold(6e9) == 0.0
    assert P.moments_bound_l1_party_level(0.0, 3, 1e9, 5) == 0.0
    assert P.moments_bound_l1_party_level(1e-300, 1, 300.0, 2) >= 0.0
    rep = P.account_l1([[6, 0], [2, 2]], 3, 1e9, 1e-5)
    assert math.isfinite(rep.epsilon)
