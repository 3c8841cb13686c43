import logging
import math

import mpmath
import numpy as np
import pytest

from dataprice.core import (
    BoxSet,
    ConsumptionBox,
    CorrelatedSet,
    MarketParams,
    PortfolioBox,
    SampleCISet,
    UnsupportedConfigurationError,
    UtilityParams,
    ValidationError,
)
from dataprice.pricing import (
    Formula,
    PriceQuote,
    find_turning_point,
    g1_slope,
    indifference_residual,
    log_turning_indicator,
    power_high_discount,
    power_turning_indicator,
    price_general,
    price_log,
    price_no_consumption,
    price_power,
    solve_indifference,
)
from dataprice.stats import rng_stream
from dataprice.value import ValueContext, g1_closed

MARKET = MarketParams(0.04, 0.04, 1.0)
FREE = PortfolioBox()


def _ctxs(u, k1, k2, T=1.0, cons=ConsumptionBox()):
    m = MarketParams(0.04, 0.04, T)
    return ValueContext(u, m, k1, cons), ValueContext(u, m, k2, cons)


# --- closed forms -------------------------------------------------------------


def test_no_consumption_examples():
    assert price_no_consumption(0.0, 1.0, 0.05, 0.05, 1.0).price == 0.0
    assert price_no_consumption(1.0, 1.0, 0.04, 0.05, 1.0).price == 0.0
    mpmath.mp.dps = 40
    ref = float(1 - mpmath.e ** (-mpmath.mpf("0.01")))
    q = price_no_consumption(0.0, 1.0, 0.04, 0.05, 1.0)
    assert q.price == pytest.approx(ref, rel=1e-14)
    assert q.formula is Formula.NO_CONSUMPTION and q.turning_point is None


def test_no_consumption_rejects_reversed_indices():
    with pytest.raises(ValidationError):
        price_no_consumption(0.0, 1.0, 0.06, 0.05, 1.0)
    with pytest.raises(ValidationError):
        price_no_consumption(0.0, -1.0, 0.04, 0.05, 1.0)
    with pytest.raises(ValidationError):
        price_no_consumption(2.0, 1.0, 0.04, 0.05, 1.0)


def test_no_consumption_strictly_decreasing_in_time():
    ps = [price_no_consumption(t, 1.0, 0.04, 0.05, 3.0).price for t in np.linspace(0, 3, 101)]
    assert all(b < a for a, b in zip(ps, ps[1:]))


def test_log_examples():
    u = UtilityParams.log(lam=0.2, rho=0.0)
    q = price_log(0.0, 1.0, 0.04, 0.06, u, 1.0)
    assert q.price == pytest.approx(1 - math.exp(-0.02 * 1.1 / 1.2), rel=1e-14)
    assert q.formula is Formula.LOG_UTILITY
    assert price_log(0.0, 1.0, 0.05, 0.05, u, 1.0).price == 0.0


def test_log_without_consumption_equals_no_consumption():
    rng = rng_stream(101, 0)
    for _ in range(200):
        T = float(rng.uniform(0.1, 30))
        t = T * float(rng.uniform())
        x = float(rng.uniform(0.1, 100))
        k1 = float(rng.uniform(0, 0.2))
        k2 = k1 + float(rng.uniform(0, 0.2))
        u = UtilityParams.log(lam=0.0, rho=float(rng.uniform(0, 1)))
        a = price_log(t, x, k1, k2, u, T).price
        b = price_no_consumption(t, x, k1, k2, T).price
        assert abs(a - b) <= 1e-14 * max(1.0, x)


def test_power_examples():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    assert price_power(0.0, 1.0, 0.05, 0.05, u, 1.0).price == 0.0
    assert price_power(1.0, 1.0, 0.04, 0.05, u, 1.0).price == 0.0
    q = price_power(0.0, 1.0, 0.04, 0.05, u, 1.0)
    assert 0 < q.price < 1 and q.formula is Formula.POWER_UTILITY
    c1, c2 = _ctxs(u, 0.04, 0.05)
    assert indifference_residual(q, 0.0, 1.0, c1, c2) < 1e-10


def test_power_preconditions():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    with pytest.raises(UnsupportedConfigurationError):
        price_power(0.0, 1.0, 0.04, 0.05, u, 1.0, cons=ConsumptionBox(0.1, 0.3))
    with pytest.raises(ValidationError):
        price_power(0.0, 1.0, 0.04, 0.05, UtilityParams.power(0.5, lam=0.0), 1.0)
    with pytest.raises(ValidationError):
        price_power(0.0, 1.0, 0.04, 0.05, UtilityParams.log(lam=0.2), 1.0)


@pytest.mark.parametrize("p", [-3.0, -1.0, 0.2, 0.5, 0.9])
def test_closed_forms_are_proportional_to_wealth(p):
    u = UtilityParams.power(p, lam=0.3, rho=0.05)
    a = price_power(0.2, 1.0, 0.03, 0.07, u, 2.0).price
    b = price_power(0.2, 7.5, 0.03, 0.07, u, 2.0).price
    assert b == pytest.approx(7.5 * a, rel=1e-13)


# --- residual and general solve -----------------------------------------------


def test_residual_zero_for_equal_indices_and_grows_off_root():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    c1, _ = _ctxs(u, 0.05, 0.05)
    assert indifference_residual(PriceQuote(0.0, 0.05, 0.05, Formula.POWER_UTILITY), 0.0, 1.0, c1, c1) == 0.0
    for u in (u, UtilityParams.log(lam=0.1, rho=0.2)):
        c1, c2 = _ctxs(u, 0.04, 0.06, T=2.0)
        q = price_general(0.0, 1.0, BoxSet(0.05, 0.3, 0.02, 0.09), BoxSet(0.1, 0.3, 0.02, 0.05), FREE,
                          ConsumptionBox(), u, MarketParams(0.04, 0.04, 2.0))
        c1, c2 = _ctxs(u, q.k1, q.k2, T=2.0)
        base = indifference_residual(q, 0.0, 1.0, c1, c2)
        off = PriceQuote(q.price + 1e-3, q.k1, q.k2, q.formula)
        assert base < 1e-10 and indifference_residual(off, 0.0, 1.0, c1, c2) > base


def test_residual_rejects_price_exhausting_wealth():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    c1, c2 = _ctxs(u, 0.04, 0.05)
    with pytest.raises(ValidationError):
        indifference_residual(PriceQuote(1.0, 0.04, 0.05, Formula.POWER_UTILITY), 0.0, 1.0, c1, c2)


def test_general_equal_sets_give_zero():
    b = BoxSet(0.05, 0.2, 0.02, 0.06)
    for u in (UtilityParams.power(0.5, lam=0.2, rho=0.1), UtilityParams.log(lam=0.1, rho=0.2)):
        assert price_general(0.0, 1.0, b, b, FREE, ConsumptionBox(), u, MARKET).price == 0.0


def test_general_drift_interval_straddling_rate_gives_zero():
    # both drift intervals contain r, so the worst case is the risk-free rate on both sides
    b1 = BoxSet(-0.1, 0.3, 0.01, 0.09)
    b2 = BoxSet(0.0, 0.1, 0.02, 0.05)
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    q = price_general(0.0, 1.0, b1, b2, FREE, ConsumptionBox(), u, MARKET)
    assert q.k1 == pytest.approx(0.04, abs=1e-15) and q.k2 == pytest.approx(0.04, abs=1e-15)
    assert q.price == 0.0


def test_general_rejects_bad_nesting():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    with pytest.raises(ValidationError):
        price_general(0.0, 1.0, BoxSet(0.1, 0.2, 0.02, 0.05), BoxSet(0.05, 0.2, 0.02, 0.05), FREE,
                      ConsumptionBox(), u, MARKET)
    with pytest.raises(ValidationError):
        price_general(0.0, 1.0, BoxSet(0.1, 0.2, 0.02, 0.05), CorrelatedSet(0.1, 0.04, 0.5, 0.5, 0.3), FREE,
                      ConsumptionBox(), u, MARKET)
    with pytest.raises(ValidationError):
        price_general(0.0, 1.0, BoxSet(0.1, 0.2, 0.02, 0.05), BoxSet(0.1, 0.2, 0.02, 0.05), FREE,
                      ConsumptionBox(), u, MARKET, method="newton")


def test_general_sample_ci_nesting():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    b1 = SampleCISet(0.1, 0.04, 1000, 0.05)
    b2 = SampleCISet(0.1, 0.04, 20000, 0.05)
    q = price_general(0.0, 1.0, b1, b2, FREE, ConsumptionBox(), u, MARKET)
    assert 0 < q.price < 1 and q.k1 < q.k2


def test_bisection_matches_closed_forms():
    rng = rng_stream(202, 0)
    b1 = BoxSet(0.05, 0.3, 0.02, 0.09)
    b2 = BoxSet(0.1, 0.25, 0.03, 0.05)
    for _ in range(10):
        T = float(rng.uniform(0.5, 5))
        m = MarketParams(0.04, 0.04, T)
        x = float(rng.uniform(0.5, 5))
        for u in (
            UtilityParams.power(float(rng.choice([-1.0, 0.5])), lam=float(rng.uniform(0.01, 1)), rho=0.1),
            UtilityParams.log(lam=float(rng.uniform(0, 1)), rho=float(rng.uniform(0, 0.5))),
            UtilityParams.power(0.5, lam=0.0, rho=0.1),
        ):
            a = price_general(0.0, x, b1, b2, FREE, ConsumptionBox(), u, m)
            b = price_general(0.0, x, b1, b2, FREE, ConsumptionBox(), u, m, method="bisection")
            assert b.formula is Formula.INDIFFERENCE_SOLVE
            assert abs(a.price - b.price) < 1e-10 * x


def test_constrained_consumption_uses_solver():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    cons = ConsumptionBox(0.1, 0.3)
    b1, b2 = BoxSet(0.05, 0.3, 0.02, 0.09), BoxSet(0.1, 0.25, 0.03, 0.05)
    q = price_general(0.0, 1.0, b1, b2, FREE, cons, u, MARKET)
    assert q.formula is Formula.INDIFFERENCE_SOLVE and 0 < q.price < 1
    c1, c2 = _ctxs(u, q.k1, q.k2, cons=cons)
    assert indifference_residual(q, 0.0, 1.0, c1, c2) < 1e-10
    assert solve_indifference(0.0, 1.0, c1, c2) == pytest.approx(q.price, abs=1e-12)


def test_log_closed_form_holds_with_boxed_consumption():
    u = UtilityParams.log(lam=0.2, rho=0.1)
    cons = ConsumptionBox(0.05, 0.3)
    b1, b2 = BoxSet(0.05, 0.3, 0.02, 0.09), BoxSet(0.1, 0.25, 0.03, 0.05)
    a = price_general(0.0, 1.0, b1, b2, FREE, cons, u, MARKET)
    b = price_general(0.0, 1.0, b1, b2, FREE, cons, u, MARKET, method="bisection")
    assert a.formula is Formula.LOG_UTILITY and abs(a.price - b.price) < 1e-10


def test_general_price_monotone_in_wealth_with_boxed_consumption():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    cons = ConsumptionBox(0.1, 0.3)
    b1, b2 = BoxSet(0.05, 0.3, 0.02, 0.09), BoxSet(0.1, 0.25, 0.03, 0.05)
    ps = [price_general(0.0, x, b1, b2, FREE, cons, u, MARKET).price for x in (0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a for a, b in zip(ps, ps[1:]))


def test_price_monotone_in_sets():
    u = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    big = BoxSet(0.0, 0.3, 0.01, 0.09)
    mid = BoxSet(0.06, 0.25, 0.02, 0.06)
    small = BoxSet(0.1, 0.2, 0.03, 0.04)
    args = (FREE, ConsumptionBox(), u, MARKET)
    p_mid_small = price_general(0.0, 1.0, mid, small, *args).price
    p_big_small = price_general(0.0, 1.0, big, small, *args).price
    p_big_mid = price_general(0.0, 1.0, big, mid, *args).price
    assert p_big_small >= p_mid_small
    assert p_big_small >= p_big_mid


# --- turning points -----------------------------------------------------------


def test_log_turning_point_regimes():
    assert find_turning_point(0.04, 0.06, UtilityParams.log(lam=0.2, rho=0.05), 20.0) is None
    assert find_turning_point(0.04, 0.06, UtilityParams.log(lam=0.0, rho=0.5), 20.0) is None
    u = UtilityParams.log(lam=0.1, rho=0.5)
    ts = find_turning_point(0.04, 0.06, u, 20.0)
    assert 0 < ts < 20
    assert abs(log_turning_indicator(ts, u, 20.0)) < 1e-8
    grid = np.linspace(0, 20, 10001)
    prices = np.array([price_log(t, 1.0, 0.04, 0.06, u, 20.0, with_turning_point=False).price for t in grid])
    assert abs(grid[np.argmax(prices)] - ts) <= grid[1] - grid[0]


def test_log_turning_point_zero_when_indicator_starts_negative():
    # short horizon: the indicator is already negative at t = 0
    assert find_turning_point(0.04, 0.06, UtilityParams.log(lam=0.1, rho=0.5), 0.5) == 0.0


def test_price_log_fills_turning_point():
    q = price_log(0.0, 1.0, 0.04, 0.06, UtilityParams.log(lam=0.1, rho=0.5), 20.0)
    assert q.turning_point is not None and q.turning_point > 0


def test_power_turning_point_low_discount_is_none():
    # rho - p max K = -0.015 <= (1-p) lam^{1/(1-p)} = 0.02
    u = UtilityParams.power(0.5, lam=0.2, rho=0.01)
    assert find_turning_point(0.04, 0.05, u, 10.0) is None
    for t in np.linspace(0, 9.99, 50):
        assert power_turning_indicator(t, 0.04, 0.05, u, 10.0) > 0


def test_power_turning_point_interior():
    u = UtilityParams.power(0.5, lam=0.01, rho=0.5)
    assert power_high_discount(0.04, 0.05, u)
    ts = find_turning_point(0.04, 0.05, u, 50.0)
    assert ts is not None and 0 < ts < 50
    grid = np.linspace(0, 50, 10001)
    prices = [price_power(t, 1.0, 0.04, 0.05, u, 50.0, with_turning_point=False).price for t in grid]
    assert abs(grid[int(np.argmax(prices))] - ts) <= 2 * (grid[1] - grid[0])


def test_g1_slope_matches_finite_difference():
    u = UtilityParams.power(-1.0, lam=0.3, rho=0.2)
    ctx = ValueContext(u, MarketParams(0.04, 0.04, 5.0), 0.06)
    for t in (0.0, 1.3, 4.0):
        h = 1e-5
        fd = (g1_closed(t + h, ctx) - g1_closed(t - h, ctx)) / (2 * h) if t > 0 else (
            g1_closed(t + h, ctx) - g1_closed(t, ctx)) / h
        assert g1_slope(t, 0.06, u, 5.0) == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_turning_point_preconditions():
    with pytest.raises(ValidationError):
        find_turning_point(0.05, 0.04, UtilityParams.log(lam=0.1, rho=0.5), 1.0)
    with pytest.raises(ValidationError):
        find_turning_point(0.04, 0.05, UtilityParams.log(lam=0.1, rho=0.5), 0.0)


def test_power_multiple_sign_changes_are_logged(caplog, monkeypatch):
    import dataprice.pricing as pr

    monkeypatch.setattr(pr, "power_turning_indicator", lambda t, *a: math.cos(t))
    monkeypatch.setattr(pr, "power_high_discount", lambda *a: True)
    with caplog.at_level(logging.WARNING, logger=pr.log.name):
        pr.find_turning_point(0.04, 0.05, UtilityParams.power(0.5, lam=0.01, rho=0.5), 20.0)
    assert any("changes sign" in r.message for r in caplog.records)
