"""Independent oracles the product code must agree with.

Each oracle takes a deliberately different computational route than the
implementation it checks: brute-force enumeration instead of counting
recurrences, arbitrary-precision arithmetic instead of floats, and
incomplete-beta tail probabilities instead of library survival functions.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import comb

import mpmath

mpmath.mp.dps = 50


def mann_whitney_exact_bruteforce(x, y) -> float:
    """Two-sided exact Mann-Whitney p by enumerating all C(n+m, n) labelings.

    Convention: p = min(1, 2 * P(U >= u_max)) with u_max the larger of the
    observed U statistics.  Tie-free samples only.
    """
    n1, n2 = len(x), len(y)
    combined = sorted(list(x) + list(y))
    assert len(set(combined)) == len(combined), "oracle requires tie-free samples"
    rank_of = {v: i + 1 for i, v in enumerate(combined)}
    r1 = sum(rank_of[v] for v in x)
    u1 = r1 - n1 * (n1 + 1) / 2
    u_max = max(u1, n1 * n2 - u1)

    total = n1 + n2
    count_ge = 0
    offset = n1 * (n1 + 1) / 2
    for subset in combinations(range(1, total + 1), n1):
        u = sum(subset) - offset
        if u >= u_max:
            count_ge += 1
    return min(1.0, 2.0 * count_ge / comb(total, n1))


def welch_p_highprecision(x, y) -> float:
    """Two-sided Welch p-value via the regularized incomplete beta function."""
    n1, n2 = len(x), len(y)
    xs = [mpmath.mpf(v) for v in x]
    ys = [mpmath.mpf(v) for v in y]
    m1 = sum(xs) / n1
    m2 = sum(ys) / n2
    v1 = sum((v - m1) ** 2 for v in xs) / (n1 - 1)
    v2 = sum((v - m2) ** 2 for v in ys) / (n2 - 1)
    if m1 == m2:
        return 1.0
    se_sq = v1 / n1 + v2 / n2
    if se_sq == 0:
        return 0.0
    t = (m1 - m2) / mpmath.sqrt(se_sq)
    df = se_sq**2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
    x_val = df / (df + t**2)
    p = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, x_val, regularized=True)
    return float(p)


def normal_quantile_highprecision(p: float) -> float:
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


def normal_cdf_highprecision(x: float) -> float:
    return float(mpmath.ncdf(x))


def summary_exact(measurement_ns_per_vm, repetitions: int):
    """(per_vm_means, mean, stddev, relative_stddev) in exact arithmetic.

    Per-VM means and the aggregate mean stay rational; the square root is
    taken at 50 decimal digits.
    """
    per_vm = [
        Fraction(sum(row), len(row) * repetitions) for row in measurement_ns_per_vm
    ]
    n = len(per_vm)
    mean = sum(per_vm, Fraction(0)) / n
    variance = sum((v - mean) ** 2 for v in per_vm) / (n - 1)
    stddev = mpmath.sqrt(mpmath.mpf(variance.numerator) / variance.denominator)
    relative = stddev / (mpmath.mpf(mean.numerator) / mean.denominator) if mean else 0
    return (
        [float(v) for v in per_vm],
        float(mpmath.mpf(mean.numerator) / mean.denominator),
        float(stddev),
        float(relative),
    )


def pooled_effect_exact(x, y) -> float:
    """Standardized mean difference recomputed at 50 decimal digits."""
    xm = [mpmath.mpf(v) for v in x]
    ym = [mpmath.mpf(v) for v in y]
    n1, n2 = len(xm), len(ym)
    m1 = sum(xm) / n1
    m2 = sum(ym) / n2
    v1 = sum((v - m1) ** 2 for v in xm) / (n1 - 1)
    v2 = sum((v - m2) ** 2 for v in ym) / (n2 - 1)
    pooled = mpmath.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2))
    if pooled == 0:
        return 0.0 if m1 == m2 else float("inf")
    return float((m1 - m2) / pooled)
