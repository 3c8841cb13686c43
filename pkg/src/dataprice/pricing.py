"""Indifference price of a data asset that shrinks the ambiguity set.

The buyer pays ``P`` such that the robust value with the smaller set at
wealth ``x - P`` equals the robust value with the larger set at ``x``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AmbiguitySet,
    BoxSet,
    ConsumptionBox,
    CorrelatedSet,
    EllipsoidSet,
    MarketParams,
    PortfolioBox,
    SampleCISet,
    UnsupportedConfigurationError,
    UtilityParams,
    ValidationError,
    box_contains,
    correlated_nested,
    ellipsoid_nested,
)
from .k_index import k_index
from .stats import sample_ci_box
from .value import ValueContext, g21, g23, log_g12, value_parts

log = logging.getLogger(__name__)

_K_ORDER_RTOL = 1e-12
_SOLVE_MAX_ITER = 200
_TURNING_GRID = 1000


class Formula(enum.Enum):
    NO_CONSUMPTION = "no_consumption"
    LOG_UTILITY = "log_utility"
    POWER_UTILITY = "power_utility"
    # numerical root of the defining equation (no closed form available or requested)
    INDIFFERENCE_SOLVE = "indifference_solve"


@dataclass(frozen=True)
class PriceQuote:
    price: float
    k1: float
    k2: float
    formula: Formula
    turning_point: Optional[float] = None

    def as_record(self) -> dict:
        return {
            "price": self.price,
            "k1": self.k1,
            "k2": self.k2,
            "formula": self.formula.value,
            "turning_point": self.turning_point,
        }


def _check_inputs(t: float, x: float, k1: float, k2: float, T: float) -> None:
    if not x > 0:
        raise ValidationError(f"wealth must be > 0, got {x}")
    if not 0.0 <= t <= T:
        raise ValidationError(f"time t={t} outside [0, T={T}]")
    if k1 - k2 > _K_ORDER_RTOL * max(1.0, abs(k1), abs(k2)):
        raise ValidationError(f"k1={k1} exceeds k2={k2}: the purchased set is not nested")


def _from_log_ratio(x: float, log_ratio: float) -> float:
    # x * (1 - exp(log_ratio)), log_ratio <= 0
    return max(0.0, -x * math.expm1(min(log_ratio, 0.0)))


def price_no_consumption(t: float, x: float, k1: float, k2: float, T: float) -> PriceQuote:
    _check_inputs(t, x, k1, k2, T)
    return PriceQuote(_from_log_ratio(x, (k1 - k2) * (T - t)), k1, k2, Formula.NO_CONSUMPTION)


def log_horizon_factor(t: float, utility: UtilityParams, T: float) -> float:
    """``g23 / g21``: the effective horizon over which a gain in ``K`` accrues."""
    return g23(t, utility, T) / g21(t, utility, T)


def price_log(
    t: float,
    x: float,
    k1: float,
    k2: float,
    utility: UtilityParams,
    T: float,
    with_turning_point: bool = True,
) -> PriceQuote:
    if utility.is_power:
        raise ValidationError("price_log needs log utility")
    _check_inputs(t, x, k1, k2, T)
    price = _from_log_ratio(x, (k1 - k2) * log_horizon_factor(t, utility, T))
    tp = find_turning_point(k1, k2, utility, T) if with_turning_point and k1 < k2 else None
    return PriceQuote(price, k1, k2, Formula.LOG_UTILITY, tp)


def _k_tilde(k: float, utility: UtilityParams) -> float:
    return (utility.rho - utility.p * k) / (1.0 - utility.p)


def price_power(
    t: float,
    x: float,
    k1: float,
    k2: float,
    utility: UtilityParams,
    T: float,
    cons: ConsumptionBox = ConsumptionBox(),
    with_turning_point: bool = True,
) -> PriceQuote:
    if not utility.is_power:
        raise ValidationError("price_power needs power utility")
    if utility.lam <= 0:
        raise ValidationError("price_power needs lam > 0; use price_no_consumption")
    if not cons.unconstrained:
        raise UnsupportedConfigurationError("the power closed form needs consumption box [0, inf)")
    _check_inputs(t, x, k1, k2, T)
    p = utility.p
    a = log_g12(t, _k_tilde(k1, utility), utility, T)
    b = log_g12(t, _k_tilde(k2, utility), utility, T)
    price = _from_log_ratio(x, (1.0 - p) / p * (a - b))
    if not price >= 0:
        raise ValidationError(f"negative power price {price}")
    tp = find_turning_point(k1, k2, utility, T) if with_turning_point and k1 < k2 else None
    return PriceQuote(price, k1, k2, Formula.POWER_UTILITY, tp)


def solve_indifference(t: float, x: float, ctx1: ValueContext, ctx2: ValueContext) -> float:
    """Bisection for ``P`` in ``J(t, x; K1) = J(t, x - P; K2)`` on ``[0, x)``."""
    target = value_parts(t, ctx1)(x)
    j2 = value_parts(t, ctx2)
    if j2(x) <= target:
        return 0.0
    lo, hi = 0.0, x
    tol = 1e-12 * x
    for _ in range(_SOLVE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid >= x:
            break
        if j2(x - mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def indifference_residual(quote: PriceQuote, t: float, x: float, ctx1: ValueContext, ctx2: ValueContext) -> float:
    """Normalized defect ``|J(x; K1) - J(x - P; K2)| / max(1, |J(x; K1)|)``."""
    if not x - quote.price > 0:
        raise ValidationError(f"price {quote.price} leaves no wealth out of {x}")
    j1 = value_parts(t, ctx1)(x)
    j2 = value_parts(t, ctx2)(x - quote.price)
    return abs(j1 - j2) / max(1.0, abs(j1))


def _check_nested(b1: AmbiguitySet, b2: AmbiguitySet) -> None:
    if type(b1) is not type(b2):
        raise ValidationError(f"family mismatch: {b1.family} vs {b2.family}")
    if isinstance(b1, BoxSet):
        ok = box_contains(b1, b2)
    elif isinstance(b1, SampleCISet):
        ok = box_contains(sample_ci_box(b1), sample_ci_box(b2))
    elif isinstance(b1, CorrelatedSet):
        ok = correlated_nested(b1, b2)
    elif isinstance(b1, EllipsoidSet):
        ok = ellipsoid_nested(b1, b2)
    else:
        raise ValidationError(f"unknown ambiguity set {b1!r}")
    if not ok:
        raise ValidationError("b2 is not contained in b1")


def price_general(
    t: float,
    x: float,
    b1: AmbiguitySet,
    b2: AmbiguitySet,
    box: PortfolioBox,
    cons: ConsumptionBox,
    utility: UtilityParams,
    market: MarketParams,
    method: str = "auto",
    with_turning_point: bool = True,
) -> PriceQuote:
    """Price the move from ``b1`` to ``b2``.

    ``method="auto"`` uses the closed form when one exists and the indifference
    solve otherwise; ``method="bisection"`` always solves numerically.
    """
    if method not in ("auto", "bisection"):
        raise ValidationError(f"unknown method {method!r}")
    _check_nested(b1, b2)
    p = utility.risk_exponent
    k1 = k_index(b1, box, market, p).k
    k2 = k_index(b2, box, market, p).k
    T = market.T
    _check_inputs(t, x, k1, k2, T)
    if method == "auto":
        if utility.lam == 0.0:
            # the minimum-consumption drag cancels between the two sides
            return price_no_consumption(t, x, k1, k2, T)
        if not utility.is_power:
            return price_log(t, x, k1, k2, utility, T, with_turning_point)
        if cons.unconstrained:
            return price_power(t, x, k1, k2, utility, T, cons, with_turning_point)
    k2 = max(k1, k2)
    ctx1 = ValueContext(utility, market, k1, cons)
    ctx2 = ValueContext(utility, market, k2, cons)
    price = solve_indifference(t, x, ctx1, ctx2)
    return PriceQuote(price, k1, k2, Formula.INDIFFERENCE_SOLVE)


# --- turning point ---------------------------------------------------------


def log_turning_indicator(t: float, utility: UtilityParams, T: float) -> float:
    """Positive where the log-utility price rises in ``t``, negative where it falls."""
    lam, rho = utility.lam, utility.rho
    tau = T - t
    e = math.exp(rho * tau)
    return lam * rho * e * (rho - lam) * tau - (rho - lam) ** 2 - (2 * rho - lam) * lam * e


def g1_slope(t: float, k: float, utility: UtilityParams, T: float) -> float:
    """``dg1/dt`` from the closed form, unconstrained consumption.

    Written as ``(1-p) e^{-y tau} (y b - 1) / g12`` with ``y`` the effective
    rate and ``b = g12(T)``, which keeps full relative accuracy when the slope
    is tiny far from the horizon.
    """
    p = utility.p
    y = _k_tilde(k, utility)
    log_b = math.log(utility.lam) / (p - 1.0)
    z = -y * (T - t)
    log_g = log_g12(t, y, utility, T)
    return (1 - p) * (y * math.exp(log_b + z - log_g) - math.exp(z - log_g))


def power_turning_indicator(t: float, k1: float, k2: float, utility: UtilityParams, T: float) -> float:
    """``p * (g1'(K1) - g1'(K2))``; negative where the power price rises in ``t``."""
    return utility.p * (g1_slope(t, k1, utility, T) - g1_slope(t, k2, utility, T))


def _bisect_sign(f, lo: float, hi: float) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def power_high_discount(k1: float, k2: float, utility: UtilityParams) -> bool:
    p, lam = utility.p, utility.lam
    return utility.rho - max(p * k1, p * k2) > (1 - p) * lam ** (1 / (1 - p))


def find_turning_point(k1: float, k2: float, utility: UtilityParams, T: float) -> Optional[float]:
    """Date where the price switches from rising to falling in ``t``.

    ``None`` means the regime test says the price falls on all of ``[0, T]``;
    ``0.0`` means a rising phase is possible in that regime but absent for this ``T``.
    """
    if not k1 < k2:
        raise ValidationError(f"turning point needs k1 < k2, got {k1}, {k2}")
    if not T > 0:
        raise ValidationError(f"T must be > 0, got {T}")
    lam, rho = utility.lam, utility.rho
    if lam == 0.0:
        return None
    if not utility.is_power:
        if rho <= lam:
            return None
        f = lambda t: log_turning_indicator(t, utility, T)  # noqa: E731
        if f(0.0) <= 0:
            return 0.0
        return _bisect_sign(f, 0.0, T)

    if not power_high_discount(k1, k2, utility):
        return None
    f = lambda t: power_turning_indicator(t, k1, k2, utility, T)  # noqa: E731
    grid = np.linspace(0.0, T, _TURNING_GRID + 1)
    vals = np.array([f(t) for t in grid])
    neg = vals < 0
    changes = np.flatnonzero(neg[:-1] != neg[1:])
    if changes.size == 0:
        return 0.0 if not neg[0] else T
    if changes.size > 1:
        log.warning("power turning indicator changes sign %d times on [0, %g]", changes.size, T)
    i = int(changes[0])
    if not neg[i]:
        # falling first, then rising; no rise-then-fall turning point at the start
        return 0.0
    return _bisect_sign(f, float(grid[i]), float(grid[i + 1]))
