"""Sampling statistics, Student-t / chi-squared distribution functions and
confidence-interval ambiguity sets.

The distribution functions are self-contained: regularized incomplete beta
and gamma functions (continued fractions and series) with Loader's
saddle-point prefactors, inverted by bracketed bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .core import BoxSet, NumericalError, SampleCISet, ValidationError

_EPS = 2.220446049250313e-16
_TINY = 1e-300
_MAX_ITER = 200_000
_LN_SQRT_2PI = 0.5 * math.log(2 * math.pi)

# Stirling-series coefficients for stirlerr, x >= 15.
_S0, _S1, _S2, _S3, _S4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188


def _stirlerr(x: float) -> float:
    """log Gamma(x) - [(x - 1/2) log x - x + log sqrt(2 pi)]."""
    if x >= 15.0:
        x2 = x * x
        return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / x2) / x2) / x2) / x2) / x
    return math.lgamma(x) - ((x - 0.5) * math.log(x) - x + _LN_SQRT_2PI)


def _bd0(x: float, m: float) -> float:
    """x log(x/m) + m - x, accurate when x is close to m."""
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / m) + m - x


def _lbeta(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if a < 10.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    # lgamma(a) - lgamma(a+b) without cancellation between two huge terms
    diff = -(a - 0.5) * math.log1p(b / a) - b * math.log(a + b) + b
    diff += _stirlerr(a) - _stirlerr(a + b)
    return math.lgamma(b) + diff


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
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
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_pair(a: float, b: float, x: float, y: float | None = None) -> Tuple[float, float]:
    """Regularized incomplete beta ``(I_x(a,b), 1 - I_x(a,b))``.

    ``y`` may be passed as an accurately computed ``1 - x``.
    """
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    log_front = a * math.log(x) + b * math.log(y) - _lbeta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        lower = math.exp(log_front) * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = math.exp(log_front) * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def gammainc_pair(a: float, x: float) -> Tuple[float, float]:
    """Regularized incomplete gamma ``(P(a,x), Q(a,x))``."""
    if x <= 0.0:
        return 0.0, 1.0
    # x^a e^-x / Gamma(a+1), via Loader's decomposition
    if a >= 1.0:
        front = math.exp(-_stirlerr(a) - _bd0(a, x)) / math.sqrt(2 * math.pi * a)
    else:
        front = math.exp(a * math.log(x) - x - math.lgamma(a + 1.0))
    if x < a + 1.0:
        term = 1.0
        total = 1.0
        ap = a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                lower = front * total
                return lower, 1.0 - lower
        raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            upper = front * a * h
            return 1.0 - upper, upper
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_prob_df(prob: float, df) -> None:
    if not 0.0 < prob < 1.0:
        raise ValidationError(f"probability must lie in (0,1), got {prob}")
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df}")


def t_upper_tail(t: float, df: float) -> float:
    """P(T > t) for t >= 0."""
    t2 = t * t
    x = df / (df + t2)
    y = t2 / (df + t2)
    return 0.5 * betainc_pair(0.5 * df, 0.5, x, y)[0]


def t_cdf(t: float, df: float) -> float:
    if t >= 0:
        return 1.0 - t_upper_tail(t, df)
    return t_upper_tail(-t, df)


def chi2_cdf(x: float, df: float) -> float:
    return gammainc_pair(0.5 * df, 0.5 * x)[0]


def _bisect_increasing(f, lo: float, hi: float, target: float, *, log_scale: bool = False) -> float:
    """Root of increasing ``f(z) = target`` in ``[lo, hi]``, to machine precision."""
    for _ in range(2000):
        mid = math.exp(0.5 * (math.log(lo) + math.log(hi))) if log_scale else 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericalError("bisection did not terminate")
    return 0.5 * (lo + hi)


@lru_cache(maxsize=4096)
def t_quantile(prob: float, df: int) -> float:
    """Student-t inverse distribution function."""
    _check_prob_df(prob, df)
    if prob == 0.5:
        return 0.0
    tail = prob if prob < 0.5 else 1.0 - prob
    hi = 1.0
    while t_upper_tail(hi, df) > tail:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError(f"t quantile bracket failed (prob={prob}, df={df})")
    # upper tail decreases in t, so bisect on its negative
    t = _bisect_increasing(lambda z: -t_upper_tail(z, df), 0.0, hi, -tail)
    return t if prob > 0.5 else -t


@lru_cache(maxsize=4096)
def chi2_quantile(prob: float, df: int) -> float:
    """Chi-squared inverse distribution function (lower-tail probability ``prob``)."""
    _check_prob_df(prob, df)
    a = 0.5 * df
    if prob <= 0.5:
        f, target = (lambda z: gammainc_pair(a, 0.5 * z)[0]), prob
    else:
        f, target = (lambda z: -gammainc_pair(a, 0.5 * z)[1]), -(1.0 - prob)
    lo = hi = float(df)
    while f(lo) >= target:
        lo *= 0.5
        if lo < 1e-300:
            return lo
    while f(hi) < target:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError(f"chi2 quantile bracket failed (prob={prob}, df={df})")
    return _bisect_increasing(f, lo, hi, target, log_scale=True)


# --- samples and intervals ----------------------------------------------


class Interval(NamedTuple):
    low: float
    high: float

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    s2: float

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"sample size must be >= 2, got {self.n}")
        if not self.s2 >= 0:
            raise ValidationError(f"sample variance must be >= 0, got {self.s2}")


@dataclass(frozen=True)
class IntervalPair:
    """Confidence intervals for the mean and the standard deviation."""

    mu_iv: Interval
    sd_iv: Interval

    def __post_init__(self):
        if self.mu_iv.low > self.mu_iv.high or self.sd_iv.low > self.sd_iv.high:
            raise ValidationError("interval endpoints out of order")
        if self.sd_iv.low <= 0:
            raise ValidationError("standard-deviation interval must have a positive lower end")


def summarize(samples: Sequence[float]) -> SampleSummary:
    """Mean and unbiased variance of a sample."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValidationError("need at least two samples")
    mean = float(arr.mean())
    s2 = float(np.sum((arr - mean) ** 2) / (arr.size - 1))
    return SampleSummary(int(arr.size), mean, s2)


def confidence_intervals(summary: SampleSummary, alpha_conf: float) -> IntervalPair:
    """Normal-model CIs: t interval for the mean, chi-squared interval for sd."""
    if not 0 < alpha_conf < 1:
        raise ValidationError(f"alpha_conf must lie in (0,1), got {alpha_conf}")
    if summary.s2 <= 0:
        raise ValidationError("zero sample variance gives degenerate intervals")
    n = summary.n
    s = math.sqrt(summary.s2)
    half = t_quantile(1 - alpha_conf / 2, n - 1) * s / math.sqrt(n)
    ss = (n - 1) * summary.s2
    sd_lo = math.sqrt(ss / chi2_quantile(1 - alpha_conf / 2, n - 1))
    sd_hi = math.sqrt(ss / chi2_quantile(alpha_conf / 2, n - 1))
    return IntervalPair(Interval(summary.mean - half, summary.mean + half), Interval(sd_lo, sd_hi))


def interval_hull(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.low, b.low), max(a.high, b.high))


def _box_from_intervals(mu_iv: Interval, sd_iv: Interval) -> BoxSet:
    return BoxSet(mu_iv.low, mu_iv.high, sd_iv.low**2, sd_iv.high**2)


def ambiguity_from_datasets(
    x_summary: SampleSummary, y_summary: SampleSummary, alpha_conf: float
) -> Tuple[BoxSet, BoxSet]:
    """Pre-purchase set (hull of both datasets' CIs) and post-purchase set (Y's CIs)."""
    ix = confidence_intervals(x_summary, alpha_conf)
    iy = confidence_intervals(y_summary, alpha_conf)
    b1 = _box_from_intervals(interval_hull(ix.mu_iv, iy.mu_iv), interval_hull(ix.sd_iv, iy.sd_iv))
    b2 = _box_from_intervals(iy.mu_iv, iy.sd_iv)
    return b1, b2


def sample_ci_box(amb: SampleCISet) -> BoxSet:
    """The drift x variance box induced by a sample-CI ambiguity set."""
    s = math.sqrt(amb.s2)
    n = amb.N
    half = t_quantile(1 - amb.alpha_conf / 2, n - 1) * s / math.sqrt(n)
    ss = (n - 1) * amb.s2
    return BoxSet(
        amb.mu_hat - half,
        amb.mu_hat + half,
        ss / chi2_quantile(1 - amb.alpha_conf / 2, n - 1),
        ss / chi2_quantile(amb.alpha_conf / 2, n - 1),
    )


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox (counter-based, 64-bit) stream for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
