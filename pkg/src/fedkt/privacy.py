"""Laplace noisy-max and data-dependent moments accounting.

Every moment bound here has the same shape. For a mechanism that is
``(a, 0)``-DP with ``a = 2 * k * gamma`` (``k`` being s, t, z or 1 depending on
tier and adjacency), and ``q`` an upper bound on the probability that the
noisy argmax misses the clean argmax::

    alpha(lam) <= min(log((1-q) * ((1-q) / (1 - e^a q))^lam + q e^(a lam)),
                      a^2 / 2 * lam * (lam + 1))

The first (data-dependent) branch is only valid when
``q < (e^a - 1) / (e^(2a) - 1)``; otherwise the second branch is used alone.
The data-dependent branch is evaluated in log space so large ``a * lam`` does
not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import VoteHistogram

DEFAULT_MAX_ORDER = 64

DATA_DEPENDENT_BANNER = (
    "data-dependent epsilon: computed from the private vote histograms and "
    "not safe to publish without a sanitising step"
)


def sample_laplace(scale: float, rng: np.random.Generator, size=None):
    """Laplace(0, scale) by inverse CDF on a uniform draw from (-1/2, 1/2)."""
    if not scale > 0:
        raise ValueError("Laplace scale must be positive")
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def pure_dp_epsilon_l1(s: int, gamma: float) -> float:
    """Server-tier noisy argmax under party-level adjacency: ``2 s gamma``."""
    _check_positive(s=s, gamma=gamma)
    return 2.0 * s * gamma


def pure_dp_epsilon_l2_party(t: int, gamma: float) -> float:
    """Party-tier noisy argmax under party-level adjacency: ``2 t gamma``."""
    _check_positive(t=t, gamma=gamma)
    return 2.0 * t * gamma


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def gap_failure_bound(hist, gamma: float) -> float:
    """Upper bound on Pr[noisy argmax != clean argmax], clamped to 1.

    Sums ``(2 + gamma*d) / (4 exp(gamma*d))`` over the non-winning classes,
    where ``d`` is that class's deficit to the winner.
    """
    counts = hist.counts if isinstance(hist, VoteHistogram) else np.asarray(hist, dtype=np.float64)
    if len(counts) < 2:
        raise ValueError("gap bound needs at least two classes")
    _check_positive(gamma=gamma)
    top = int(np.argmax(counts))
    d = gamma * (counts[top] - np.delete(counts, top))
    return float(min(1.0, np.sum((2.0 + d) * np.exp(-d) / 4.0)))


def data_dependent_threshold(a: float) -> float:
    """Largest admissible q (exclusive) for the data-dependent branch."""
    if a == 0:
        return 0.0
    # (e^a - 1) / (e^2a - 1) == 1 / (e^a + 1), written to avoid overflow
    return math.exp(-a) / (1.0 + math.exp(-a))


def _data_dependent_log_moment(q: float, a: float, lam: np.ndarray) -> np.ndarray:
    if q == 0.0:
        return np.zeros_like(lam)
    A = (lam + 1.0) * math.log1p(-q) - lam * math.log1p(-math.exp(a + math.log(q)))
    B = math.log(q) + a * lam
    big = np.maximum(A, B) > 1.0
    out = np.empty_like(lam)
    out[big] = np.logaddexp(A[big], B[big])
    small = ~big
    # log(e^A + e^B) = log1p(expm1(A) + e^B) keeps precision when the sum is near 1
    out[small] = np.log1p(np.expm1(A[small]) + np.exp(B[small]))
    return out


def log_moment_bound(q: float, a: float, lam) -> tuple[np.ndarray, bool]:
    """Moment bound at orders ``lam`` for an ``(a, 0)``-DP answer with failure bound ``q``.

    Returns the bound and whether the data-dependent branch was admissible.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if a < 0:
        raise ValueError("privacy parameter must be non-negative")
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if np.any(lam_arr < 1):
        raise ValueError("moment orders start at 1")
    independent = 0.5 * a * a * lam_arr * (lam_arr + 1.0)
    if a == 0.0:
        return np.zeros_like(lam_arr), False
    # the threshold is positive for every a > 0 even when it underflows
    admissible = q == 0.0 or q < data_dependent_threshold(a)
    if not admissible:
        return independent, False
    dependent = np.maximum(_data_dependent_log_moment(q, a, lam_arr), 0.0)
    return np.minimum(dependent, independent), True


def _scalar(q, a, lam):
    out, _ = log_moment_bound(q, a, lam)
    return float(out[0]) if np.ndim(lam) == 0 else out


def moments_bound_l1_party_level(q: float, s: int, gamma: float, lam):
    """Server-tier answer, party adjacency: sensitivity ``2s``."""
    return _scalar(q, 2.0 * s * gamma, lam)


def moments_bound_l2_example_level(q: float, gamma: float, lam):
    """Party-tier answer, example adjacency: sensitivity 2."""
    return _scalar(q, 2.0 * 1 * gamma, lam)


def moments_bound_l1_example_level(q: float, z: int, gamma: float, lam):
    """Server-tier answer, example adjacency without consistent voting.

    ``z`` is how many student models one changed example can flip; ``z = 0``
    leaves the mechanism unchanged, so the bound is 0.
    """
    if z < 0:
        raise ValueError("z must be non-negative")
    return _scalar(q, 2.0 * z * gamma, lam)


def moments_bound_l2_party_level(q: float, t: int, gamma: float, lam):
    """Party-tier answer, party adjacency: all ``t`` teachers may change."""
    return _scalar(q, 2.0 * t * gamma, lam)


def compute_z(records) -> int:
    """Worst-party count of partitions holding an answered query with top-2 gap <= 1.

    ``records[i][j]`` is the iterable of query records (anything with a
    ``gap`` attribute, or bare gap numbers) for partition ``j`` of party ``i``.
    """
    z = 0
    for party in records:
        zi = 0
        for partition in party:
            if any(getattr(r, "gap", r) <= 1 for r in partition):
                zi += 1
        z = max(z, zi)
    return z


class MomentVector:
    """Accumulated log moments ``alpha(lam)`` for ``lam = 1..max_order``."""

    __slots__ = ("alpha",)

    def __init__(self, alpha=None, max_order: int = DEFAULT_MAX_ORDER):
        if alpha is None:
            alpha = np.zeros(max_order)
        arr = np.array(alpha, dtype=np.float64).reshape(-1)
        if np.any(arr < 0):
            raise ValueError("log moments must be non-negative")
        arr.flags.writeable = False
        self.alpha = arr

    @property
    def max_order(self) -> int:
        return len(self.alpha)

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, self.max_order + 1, dtype=np.float64)

    def __len__(self):
        return len(self.alpha)

    def __add__(self, other: "MomentVector") -> "MomentVector":
        return accumulate(self, other)

    def __repr__(self):
        return f"MomentVector(max_order={self.max_order})"


def orders(max_order: int = DEFAULT_MAX_ORDER) -> np.ndarray:
    return np.arange(1, max_order + 1, dtype=np.float64)


def accumulate(ledger: MomentVector, per_query: MomentVector) -> MomentVector:
    """Sequential composition: log moments add."""
    if len(ledger) != len(per_query):
        raise ValueError(f"moment vectors differ in length ({len(ledger)} vs {len(per_query)})")
    return MomentVector(ledger.alpha + per_query.alpha)


def to_epsilon(ledger: MomentVector, delta: float) -> tuple[float, int]:
    """Tail bound ``eps = min_lam (alpha(lam) + log(1/delta)) / lam``; returns (eps, lam*)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    lam = ledger.orders
    eps = (ledger.alpha + math.log(1.0 / delta)) / lam
    i = int(np.argmin(eps))
    return float(eps[i]), i + 1


def parallel_compose(party_epsilons: Sequence[float], delta: float) -> tuple[float, float]:
    """Mechanisms on disjoint parties compose at the worst party's epsilon."""
    eps = list(party_epsilons)
    if not eps:
        raise ValueError("parallel composition over zero parties")
    return max(eps), delta


def advanced_composition_reference(eps_per_query: float, k: int, delta_prime: float) -> float:
    """Strong-composition epsilon for ``k`` runs of an ``eps_per_query``-DP mechanism."""
    if not eps_per_query > 0 or k < 1:
        raise ValueError("need eps_per_query > 0 and k >= 1")
    if not 0 < delta_prime < 1:
        raise ValueError("delta_prime must lie in (0, 1)")
    e0 = eps_per_query
    return math.sqrt(2.0 * k * math.log(1.0 / delta_prime)) * e0 + k * e0 * math.expm1(e0)


class PrivacyLedger:
    """Sequential fold of per-query moment bounds for one mechanism stream."""

    def __init__(self, max_order: int = DEFAULT_MAX_ORDER):
        self.moments = MomentVector(max_order=max_order)
        self.queries = 0
        self.data_dependent = 0

    def add_query(self, q: float, a: float) -> None:
        alpha, dd = log_moment_bound(q, a, orders(self.moments.max_order))
        self.moments = accumulate(self.moments, MomentVector(alpha))
        self.queries += 1
        self.data_dependent += int(dd)

    def epsilon(self, delta: float) -> tuple[float, int]:
        return to_epsilon(self.moments, delta)


@dataclass
class PrivacyReport:
    level: str
    gamma: Optional[float]
    delta: float
    queries_answered: int
    epsilon: float
    lambda_star: Optional[int]
    data_dependent_queries: int
    adjacency: str = "party"
    party_epsilons: Optional[list[float]] = None
    pure_epsilon_per_query: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def data_dependent_fraction(self) -> float:
        return self.data_dependent_queries / self.queries_answered if self.queries_answered else 0.0

    def to_dict(self) -> dict:
        out = {
            "level": self.level,
            "gamma": self.gamma,
            "queries_answered": self.queries_answered,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "lambda_star": self.lambda_star,
            "data_dependent_fraction": self.data_dependent_fraction,
            "data_dependent_queries": self.data_dependent_queries,
            "adjacency": self.adjacency,
            "pure_epsilon_per_query": self.pure_epsilon_per_query,
        }
        if self.party_epsilons is not None:
            out["party_epsilons"] = self.party_epsilons
        if self.level != "L0":
            out["warning"] = DATA_DEPENDENT_BANNER
        out.update(self.extras)
        return out


def _hist_counts(h) -> np.ndarray:
    return h.counts if isinstance(h, VoteHistogram) else np.asarray(h, dtype=np.float64)


def account_stream(hists: Iterable, a: float, gamma: float, max_order: int = DEFAULT_MAX_ORDER) -> PrivacyLedger:
    """Fold one stream of clean vote histograms answered with Laplace(1/gamma) noise."""
    ledger = PrivacyLedger(max_order)
    for h in hists:
        ledger.add_query(gap_failure_bound(_hist_counts(h), gamma), a)
    return ledger


def account_l1(server_hists, s: int, gamma: float, delta: float, max_order: int = DEFAULT_MAX_ORDER) -> PrivacyReport:
    """Party-level epsilon of the server-noised (L1) final model."""
    a = pure_dp_epsilon_l1(s, gamma)
    ledger = account_stream(server_hists, a, gamma, max_order)
    eps, lam = ledger.epsilon(delta)
    return PrivacyReport("L1", gamma, delta, ledger.queries, eps, lam, ledger.data_dependent,
                         adjacency="party", pure_epsilon_per_query=a)


def account_l1_example(server_hists, z: int, gamma: float, delta: float,
                       max_order: int = DEFAULT_MAX_ORDER) -> PrivacyReport:
    """Example-level epsilon of L1 when consistent voting is off."""
    a = 2.0 * z * gamma
    ledger = account_stream(server_hists, a, gamma, max_order)
    eps, lam = ledger.epsilon(delta)
    return PrivacyReport("L1", gamma, delta, ledger.queries, eps, lam, ledger.data_dependent,
                         adjacency="example", pure_epsilon_per_query=a, extras={"z": z})


def account_l2(party_hists, gamma: float, delta: float, t: Optional[int] = None,
               max_order: int = DEFAULT_MAX_ORDER) -> PrivacyReport:
    """Example-level epsilon of party-noised (L2) students.

    ``party_hists[i]`` lists every clean histogram party ``i`` answered, over
    all of its partitions: partitions share local data so they compose
    sequentially; parties are disjoint so the result is the worst party.
    With ``t`` given, the party-level epsilon is added under ``extras``.
    """
    a = 2.0 * gamma
    party_eps, lams, total_q, total_dd = [], [], 0, 0
    party_level = []
    for hists in party_hists:
        hists = list(hists)
        ledger = account_stream(hists, a, gamma, max_order)
        e, lam = ledger.epsilon(delta)
        party_eps.append(e)
        lams.append(lam)
        total_q += ledger.queries
        total_dd += ledger.data_dependent
        if t is not None:
            party_level.append(account_stream(hists, pure_dp_epsilon_l2_party(t, gamma), gamma,
                                              max_order).epsilon(delta)[0])
    eps, _ = parallel_compose(party_eps, delta)
    worst = int(np.argmax(party_eps))
    extras = {}
    if t is not None:
        extras["party_level_epsilon"] = max(party_level)
    return PrivacyReport("L2", gamma, delta, total_q, eps, lams[worst], total_dd,
                         adjacency="example", party_epsilons=party_eps, pure_epsilon_per_query=a,
                         extras=extras)
