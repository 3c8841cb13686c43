"""The one-period objective and the Investment Opportunity Index ``K``.

``K`` is the sup over portfolios of the inf over the ambiguity set of the
objective ``evaluate_f1``. Closed forms are provided for four set families;
:func:`k_minimax_oracle` evaluates the definition by brute force on grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import (
    UNBOUNDED,
    AmbiguitySet,
    BoxSet,
    CorrelatedSet,
    EllipsoidSet,
    KResult,
    MarketParams,
    NumericalError,
    PortfolioBox,
    SampleCISet,
    UnsupportedConfigurationError,
    ValidationError,
)
from .stats import chi2_quantile, sample_ci_box, t_quantile

#: Box regimes in tie-break order, left to right.
BOX_REGIMES = (
    "beta1>=pi_high",
    "1<=beta1<=pi_high",
    "beta1<=1<=beta2",
    "0<=beta2<=1",
    "beta2<=0<=beta3",
    "pi_low<=beta3<=0",
    "beta3<=pi_low",
)


def _check_p(p: float) -> None:
    if not p < 1:
        raise ValidationError(f"risk exponent p must be < 1, got {p}")


def evaluate_f1(x_pi, x_mu, x_var, market: MarketParams, p: float):
    """One-period objective for a single risky asset.

    Accepts scalars or broadcastable arrays.
    """
    if np.any(np.asarray(x_var) <= 0):
        raise ValidationError("variance must be > 0")
    cash = 1.0 - np.asarray(x_pi, dtype=float)
    out = (
        0.5 * (p - 1.0) * x_var * x_pi * x_pi
        + x_mu * x_pi
        + market.r * np.maximum(cash, 0.0)
        - market.R * np.maximum(-cash, 0.0)
    )
    return float(out) if np.ndim(out) == 0 else out


def _le(a, b) -> bool:
    """``a <= b`` where either side may be an infinite bound."""
    if a is UNBOUNDED:
        return b is UNBOUNDED
    if b is UNBOUNDED:
        return True
    return a <= b


def box_regime_index(beta1: float, beta2: float, beta3: float, box: PortfolioBox) -> Tuple[int, int]:
    """Leftmost applicable regime and the number of applicable regimes."""
    neg_lo = UNBOUNDED if box.pi_low is UNBOUNDED else box.pi_low
    tests = (
        box.pi_high is not UNBOUNDED and beta1 >= box.pi_high,
        1.0 <= beta1 and _le(beta1, box.pi_high),
        beta1 <= 1.0 <= beta2,
        0.0 <= beta2 <= 1.0,
        beta2 <= 0.0 <= beta3,
        (neg_lo is UNBOUNDED or neg_lo <= beta3) and beta3 <= 0.0,
        neg_lo is not UNBOUNDED and beta3 <= neg_lo,
    )
    hits = [i for i, ok in enumerate(tests) if ok]
    if not hits:
        raise NumericalError(f"no regime applies to beta=({beta1}, {beta2}, {beta3})")
    return hits[0], len(hits)


def k_box(amb: BoxSet, box: PortfolioBox, market: MarketParams, p: float) -> KResult:
    """Closed-form ``K`` for a drift x variance box, with borrowing and short-sale limits."""
    _check_p(p)
    r, R = market.r, market.R
    mu_lo, mu_hi, v = amb.mu_low, amb.mu_high, amb.var_high
    scale = (1.0 - p) * v
    b1 = (mu_lo - R) / scale
    b2 = (mu_lo - r) / scale
    b3 = (mu_hi - r) / scale
    col, n_hits = box_regime_index(b1, b2, b3, box)
    if col == 0:
        pi, mu = box.pi_high, mu_lo
        k = 0.5 * (p - 1) * pi * pi * v + (mu_lo - R) * pi + R
    elif col == 1:
        pi, mu = b1, mu_lo
        k = (mu_lo - R) ** 2 / (2 * scale) + R
    elif col == 2:
        pi, mu = 1.0, mu_lo
        k = 0.5 * (p - 1) * v + mu_lo
    elif col == 3:
        pi, mu = b2, mu_lo
        k = (mu_lo - r) ** 2 / (2 * scale) + r
    elif col == 4:
        pi, mu = 0.0, r
        k = r
    elif col == 5:
        pi, mu = b3, mu_hi
        k = (mu_hi - r) ** 2 / (2 * scale) + r
    else:
        pi, mu = box.pi_low, mu_hi
        k = 0.5 * (p - 1) * pi * pi * v + (mu_hi - r) * pi + r
    label = BOX_REGIMES[col] + (" (tie)" if n_hits > 1 else "")
    return KResult(k=float(k), pi_star=float(pi), mu_star=float(mu), var_star=v, regime=label)


def _require_equal_rates(market: MarketParams, family: str) -> None:
    if market.R != market.r:
        raise UnsupportedConfigurationError(
            f"the {family} closed form needs R == r (got r={market.r}, R={market.R})"
        )


def correlated_foc(alpha: float, amb: CorrelatedSet, r: float) -> float:
    """First-order condition whose root is the worst-case curve parameter."""
    k, q = amb.k, amb.q
    return 2 * amb.var_low + k * (2 - q) * alpha**q - k * q * (amb.mu_low - r) * alpha ** (q - 1)


def _bisect_foc(amb: CorrelatedSet, r: float) -> float:
    lo, hi = 1e-12 * amb.alpha_max, amb.alpha_max
    f_lo, f_hi = correlated_foc(lo, amb, r), correlated_foc(hi, amb, r)
    if not (f_lo < 0 < f_hi):
        raise NumericalError(
            f"FOC not bracketed on [{lo:.3e}, {hi:.3e}]: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}"
        )
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if correlated_foc(mid, amb, r) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(correlated_foc(lo, amb, r)) <= abs(correlated_foc(hi, amb, r)) else hi


def k_correlated(amb: CorrelatedSet, market: MarketParams, p: float) -> KResult:
    """``K`` when drift and variance ambiguity move together along a curve."""
    _check_p(p)
    _require_equal_rates(market, "correlated")
    r = market.r
    m = amb.mu_low - r
    a_bar = amb.alpha_max
    threshold = (
        (2 * amb.var_low * a_bar ** (1 - amb.q) + amb.k * (2 - amb.q) * a_bar) / (amb.k * amb.q)
    )
    if -a_bar < m <= 0:
        alpha, case = -m, "premium-erased"
    elif 0 < m < threshold:
        alpha, case = _bisect_foc(amb, r), "interior-root"
    else:
        alpha, case = a_bar, "alpha-max"
    mu, var = amb.point(alpha)
    mu, var = float(mu), float(var)
    k = (mu - r) ** 2 / (2 * (1 - p) * var) + r
    return KResult(
        k=k, pi_star=(mu - r) / ((1 - p) * var), mu_star=mu, var_star=var, regime=case
    )


def _h_value(amb: EllipsoidSet, i: int, excess: np.ndarray) -> float:
    y = np.linalg.solve(amb.cholesky[i], excess)
    return float(math.sqrt(float(y @ y)))


def k_ellipsoid(amb: EllipsoidSet, market: MarketParams, p: float) -> KResult:
    """``K`` for an ellipsoidal drift set over a finite list of covariance candidates."""
    _check_p(p)
    _require_equal_rates(market, "ellipsoid")
    r = market.r
    excess = amb.mu_hat - r
    hs = [_h_value(amb, i, excess) for i in range(len(amb.sigma_candidates))]
    i_min = int(np.argmin(hs))
    h = hs[i_min]
    sigma = amb.sigma_candidates[i_min]
    gain = max(h - amb.epsilon, 0.0)
    k = gain * gain / (2 * (1 - p)) + r
    if gain > 0:
        z = gain / (1 - p)
        pi = z * np.linalg.solve(sigma, excess) / h
        s_pi = sigma @ pi
        mu = amb.mu_hat - amb.epsilon * s_pi / math.sqrt(float(pi @ s_pi))
        regime = "interior"
    else:
        pi = np.zeros_like(excess)
        mu = np.full_like(excess, r)
        regime = "clamped"
    if amb.dim == 1:
        return KResult(k=k, pi_star=float(pi[0]), mu_star=float(mu[0]), var_star=float(sigma[0, 0]), regime=regime)
    return KResult(k=k, pi_star=pi, mu_star=mu, var_star=sigma, regime=regime)


def k_sample_ci(amb: SampleCISet, market: MarketParams, p: float) -> KResult:
    """``K`` for a confidence-interval set, from the explicit sample formula.

    The saddle point is read off the equivalent box with an unconstrained
    portfolio.
    """
    _check_p(p)
    _require_equal_rates(market, "sample-CI")
    r = market.r
    n = amb.N
    s = math.sqrt(amb.s2)
    half = t_quantile(1 - amb.alpha_conf / 2, n - 1) * s / math.sqrt(n)
    gain = max(abs(amb.mu_hat - r) - half, 0.0)
    k = gain * gain / (2 * (1 - p)) * chi2_quantile(amb.alpha_conf / 2, n - 1) / ((n - 1) * amb.s2) + r
    ref = k_box(sample_ci_box(amb), PortfolioBox(), market, p)
    return KResult(k=k, pi_star=ref.pi_star, mu_star=ref.mu_star, var_star=ref.var_star, regime=ref.regime)


def k_index(amb: AmbiguitySet, box: PortfolioBox, market: MarketParams, p: float) -> KResult:
    """Dispatch to the closed form for the family of ``amb``."""
    if isinstance(amb, BoxSet):
        return k_box(amb, box, market, p)
    if not box.unconstrained:
        raise UnsupportedConfigurationError(
            f"the {amb.family} closed form assumes an unconstrained portfolio"
        )
    if isinstance(amb, CorrelatedSet):
        return k_correlated(amb, market, p)
    if isinstance(amb, EllipsoidSet):
        return k_ellipsoid(amb, market, p)
    if isinstance(amb, SampleCISet):
        return k_sample_ci(amb, market, p)
    raise ValidationError(f"unknown ambiguity set {amb!r}")


# --- grid oracle -------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution for the brute-force oracle.

    ``n_reverse`` caps the per-axis ambiguity grid used for the inf-sup
    pass, which is not separable and costs ``n_pi * n_reverse**2``.
    """

    n_pi: int = 2001
    n_mu: int = 2001
    n_var: int = 2001
    pi_cap: float = 10.0
    n_reverse: int = 101

    def __post_init__(self):
        for name in ("n_pi", "n_mu", "n_var", "n_reverse"):
            if int(getattr(self, name)) < 3:
                raise ValidationError(f"{name} must be >= 3")
        if not (math.isfinite(self.pi_cap) and self.pi_cap > 0):
            raise ValidationError("pi_cap must be finite and positive")


@dataclass(frozen=True)
class OracleResult:
    sup_inf: float
    inf_sup: float
    pi_argmax: float
    gap_bound: float

    @property
    def gap(self) -> float:
        return self.inf_sup - self.sup_inf


def _portfolio_grid(box: PortfolioBox, grid: GridSpec) -> np.ndarray:
    lo = -grid.pi_cap if box.pi_low is UNBOUNDED else box.pi_low
    hi = grid.pi_cap if box.pi_high is UNBOUNDED else box.pi_high
    pts = np.linspace(lo, hi, grid.n_pi)
    kinks = [k for k in (0.0, 1.0) if lo <= k <= hi]
    return np.unique(np.concatenate([pts, kinks]))


def _subsample(axis: np.ndarray, n: int) -> np.ndarray:
    if axis.size <= n:
        return axis
    idx = np.unique(np.round(np.linspace(0, axis.size - 1, n)).astype(int))
    return axis[idx]


def _cash(pi: np.ndarray, market: MarketParams) -> np.ndarray:
    c = 1.0 - pi
    return market.r * np.maximum(c, 0.0) - market.R * np.maximum(-c, 0.0)


def _oracle_points(amb: AmbiguitySet, grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Discretised (drift, variance) pairs for the non-product families."""
    if isinstance(amb, CorrelatedSet):
        alpha = np.linspace(0.0, amb.alpha_max, grid.n_mu)
        mu, var = amb.point(alpha)
        return np.asarray(mu, dtype=float), np.asarray(var, dtype=float)
    if isinstance(amb, EllipsoidSet):
        if amb.dim != 1:
            raise ValidationError("the grid oracle supports one-dimensional ellipsoids only")
        mus, vars_ = [], []
        for s in amb.sigma_candidates:
            v = float(s[0, 0])
            half = amb.epsilon * math.sqrt(v)
            mus.append(np.linspace(amb.mu_hat[0] - half, amb.mu_hat[0] + half, grid.n_mu))
            vars_.append(np.full(grid.n_mu, v))
        return np.concatenate(mus), np.concatenate(vars_)
    raise ValidationError(f"no point discretisation for {amb!r}")


def _chunked_max_over_pi(pi, cash, mu, var, p, chunk=200_000):
    """For each (mu, var) pair, max over the portfolio grid of the objective."""
    out = np.empty(mu.size)
    a = 0.5 * (p - 1.0) * pi * pi
    step = max(1, chunk // pi.size)
    for s in range(0, mu.size, step):
        m = mu[s : s + step, None]
        v = var[s : s + step, None]
        out[s : s + step] = np.max(a * v + m * pi + cash, axis=1)
    return out


def k_minimax_oracle(
    amb: AmbiguitySet,
    box: PortfolioBox,
    market: MarketParams,
    p: float,
    grid: Optional[GridSpec] = None,
) -> OracleResult:
    """Brute-force sup-inf and inf-sup of the objective on grids.

    The portfolio grid always contains the kinks at 0 and 1. For boxes the
    inf over the (drift x variance) product grid splits into two 1-D
    minima because the objective is a sum of a drift term and a variance
    term; the inf-sup pass runs on a subsampled ambiguity grid.
    """
    _check_p(p)
    grid = grid or GridSpec()
    if isinstance(amb, SampleCISet):
        amb = sample_ci_box(amb)
    pi = _portfolio_grid(box, grid)
    cash = _cash(pi, market)
    quad = 0.5 * (p - 1.0) * pi * pi
    pi_max = float(np.max(np.abs(pi)))

    if isinstance(amb, BoxSet):
        mu_axis = np.linspace(amb.mu_low, amb.mu_high, grid.n_mu)
        var_axis = np.linspace(amb.var_low, amb.var_high, grid.n_var)
        inner = np.min(np.multiply.outer(quad, var_axis), axis=1) + np.min(np.multiply.outer(pi, mu_axis), axis=1)
        values = inner + cash
        mu_r = _subsample(mu_axis, grid.n_reverse)
        var_r = _subsample(var_axis, grid.n_reverse)
        mm, vv = np.meshgrid(mu_r, var_r, indexing="ij")
        best = _chunked_max_over_pi(pi, cash, mm.ravel(), vv.ravel(), p)
        inf_sup = float(np.min(best))
        h_mu = (amb.mu_high - amb.mu_low) / max(mu_r.size - 1, 1)
        h_var = (amb.var_high - amb.var_low) / max(var_r.size - 1, 1)
    else:
        mu_pts, var_pts = _oracle_points(amb, grid)
        table = quad[:, None] * var_pts[None, :] + pi[:, None] * mu_pts[None, :] + cash[:, None]
        values = np.min(table, axis=1)
        inf_sup = float(np.min(np.max(table, axis=0)))
        h_mu = float(np.max(np.diff(mu_pts))) if mu_pts.size > 1 else 0.0
        h_var = float(np.max(np.abs(np.diff(var_pts)))) if var_pts.size > 1 else 0.0
    i_best = int(np.argmax(values))
    sup_inf = float(values[i_best])
    h_pi = float(np.max(np.diff(pi)))
    var_max = amb.var_high if isinstance(amb, BoxSet) else float(np.max(var_pts))
    slope = (1.0 - p) * var_max * pi_max + _drift_scale(amb) + market.R
    gap_bound = pi_max * h_mu + 0.5 * (1.0 - p) * pi_max**2 * h_var + slope * h_pi
    return OracleResult(sup_inf=sup_inf, inf_sup=inf_sup, pi_argmax=float(pi[i_best]), gap_bound=gap_bound)


def _drift_scale(amb: AmbiguitySet) -> float:
    if isinstance(amb, BoxSet):
        return max(abs(amb.mu_low), abs(amb.mu_high))
    if isinstance(amb, CorrelatedSet):
        return abs(amb.mu_low) + amb.alpha_max
    half = amb.epsilon * max(math.sqrt(float(s[0, 0])) for s in amb.sigma_candidates)
    return float(np.max(np.abs(amb.mu_hat))) + half


def correlated_grid_search(amb: CorrelatedSet, market: MarketParams, p: float, n: int = 1_000_001) -> float:
    """Minimise the Merton value along the curve on a dense parameter grid."""
    alpha = np.linspace(0.0, amb.alpha_max, n)
    mu, var = amb.point(alpha)
    vals = (mu - market.r) ** 2 / (2 * (1 - p) * var)
    return float(np.min(vals)) + market.r
