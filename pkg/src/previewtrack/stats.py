"""One-way ANOVA and paired t-test with self-contained p-values.

p-values come from the regularized incomplete beta function evaluated by a
modified Lentz continued fraction to 1e-12, so results are identical across
platforms and carry no dependency beyond the standard library math.
"""

from __future__ import annotations

import math
import warnings

_CF_TOL = 1e-12
_CF_MAX_ITER = 500
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError("incomplete beta continued fraction failed to converge")


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("shape parameters must be positive")
    if x < 0.0 or x > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only below the distribution mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper-tail probability of the F(d1, d2) distribution."""
    if f < 0.0:
        raise ValueError("F statistic must be nonnegative")
    if math.isinf(f):
        return 0.0
    return reg_inc_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided p-value of Student's t with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return reg_inc_beta(df / (df + t * t), df / 2.0, 0.5)


def anova_oneway(groups) -> tuple[float, float]:
    """Classical between/within F statistic and its p-value.

    Zero within-group variance with distinct group means is reported as
    F = inf, p = 0; fully identical data yields F = 0, p = 1.
    """
    groups = [list(map(float, g)) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("need at least two groups with at least two samples each")
    n_total = sum(len(g) for g in groups)
    k = len(groups)
    grand = sum(sum(g) for g in groups) / n_total
    ss_between = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ss_within = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups)
    d1 = k - 1
    d2 = n_total - k
    if ss_within == 0.0:
        if ss_between == 0.0:
            return 0.0, 1.0
        return math.inf, 0.0
    f = (ss_between / d1) / (ss_within / d2)
    return f, f_sf(f, d1, d2)


def paired_t(before, after) -> tuple[float, float]:
    """Paired t-test on after - before; returns (t, two-sided p).

    A constant nonzero shift with zero variance is reported as signed
    infinity with p = 0; identical sequences give t = 0, p = 1.
    """
    before = [float(v) for v in before]
    after = [float(v) for v in after]
    if len(before) != len(after):
        raise ValueError("paired samples must have equal length")
    n = len(before)
    if n < 2:
        raise ValueError("need at least two pairs")
    d = [a - b for a, b in zip(after, before)]
    mean = sum(d) / n
    var = sum((v - mean) ** 2 for v in d) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        warnings.warn("zero-variance paired differences")
        return math.copysign(math.inf, mean), 0.0
    t = mean / math.sqrt(var / n)
    return t, t_sf_two_sided(t, n - 1)


def two_sample_t(a, b) -> tuple[float, float]:
    """Pooled-variance two-sample t-test; returns (t, two-sided p)."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("need at least two samples per group")
    ma = sum(a) / na
    mb = sum(b) / nb
    va = sum((v - ma) ** 2 for v in a) / (na - 1)
    vb = sum((v - mb) ** 2 for v in b) / (nb - 1)
    sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
    if sp2 == 0.0:
        if ma == mb:
            return 0.0, 1.0
        warnings.warn("zero pooled variance")
        return math.copysign(math.inf, ma - mb), 0.0
    t = (ma - mb) / math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    return t, t_sf_two_sided(t, na + nb - 2)


def pairwise_bonferroni(groups: dict) -> dict:
    """All pairwise two-sample t-tests with Bonferroni-corrected p-values.

    A deliberately conservative substitute for a studentized-range post-hoc
    procedure; results carry both raw and corrected p so the correction is
    auditable.
    """
    labels = sorted(groups)
    pairs = [(a, b) for i, a in enumerate(labels) for b in labels[i + 1:]]
    if not pairs:
        raise ValueError("need at least two groups")
    m = len(pairs)
    out = {}
    for a, b in pairs:
        t, p = two_sample_t(groups[a], groups[b])
        out[(a, b)] = {"t": t, "p_raw": p, "p_bonferroni": min(1.0, m * p)}
    return out
