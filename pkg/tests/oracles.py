"""Independent scalar references, written straight from the closed forms with
mpmath at 50 digits. Nothing here imports the package."""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 50


def moment_bound(q, k, gamma, lam):
    """min(data-dependent, data-independent) for sensitivity ``2 k gamma``.

    The data-dependent branch only counts when q < (e^{2kg}-1)/(e^{4kg}-1),
    and a log moment is never negative.
    """
    # tiny q puts the answer near q itself; carry enough digits to resolve 1 + q
    extra = int(-mp.log10(q)) + 10 if q > 0 else 0
    with mp.workdps(mp.mp.dps + extra):
        return +_moment_bound(mp.mpf(q), mp.mpf(k), mp.mpf(gamma), mp.mpf(lam))


def _moment_bound(q, k, gamma, lam):
    indep = 2 * k**2 * gamma**2 * lam * (lam + 1)
    if k == 0:
        return mp.mpf(0)
    eps = 2 * k * gamma
    threshold = (mp.e**eps - 1) / (mp.e ** (2 * eps) - 1)
    if not q < threshold:
        return indep
    dep = mp.log((1 - q) * ((1 - q) / (1 - mp.e**eps * q)) ** lam + q * mp.e ** (eps * lam))
    return min(max(dep, mp.mpf(0)), indep)


def gap_bound(counts, gamma):
    counts = [mp.mpf(c) for c in counts]
    top = max(range(len(counts)), key=lambda i: (counts[i], -i))
    total = mp.mpf(0)
    for i, c in enumerate(counts):
        if i == top:
            continue
        d = mp.mpf(gamma) * (counts[top] - c)
        total += (2 + d) / (4 * mp.e**d)
    return min(mp.mpf(1), total)


def epsilon_from_moments(alpha, delta):
    """Brute force over lam = 1..len(alpha)."""
    best, best_lam = None, None
    for lam, a in enumerate(alpha, start=1):
        e = (mp.mpf(a) + mp.log(1 / mp.mpf(delta))) / lam
        if best is None or e < best:
            best, best_lam = e, lam
    return best, best_lam


def strong_composition(e0, k, delta):
    e0 = mp.mpf(e0)
    return mp.sqrt(2 * k * mp.log(1 / mp.mpf(delta))) * e0 + k * e0 * (mp.e**e0 - 1)


def laplace_two_class_win(gap, gamma):
    """Pr[c0 + L0 > c1 + L1] for i.i.d. Laplace(0, 1/gamma) noise, c0 - c1 = gap >= 0.

    The difference of two Laplace(b) variables has tail
    Pr[D > x] = (2 + x/b) e^{-x/b} / 4 for x >= 0.
    """
    x = mp.mpf(gap) * mp.mpf(gamma)
    return 1 - (2 + x) * mp.e ** (-x) / 4
