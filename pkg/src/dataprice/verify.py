"""Oracle suites behind ``dataprice verify``.

Each suite draws seeded random instances, compares a closed form against an
independent numerical route and reports the worst error. ``perturb=True``
multiplies the closed-form side's ``K`` by ``1 + 1e-3`` so the harness can
check that it actually fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .k_index import BOX_REGIMES, GridSpec, k_box, k_minimax_oracle
from .core import BoxSet, MarketParams, PortfolioBox, UtilityParams
from .pricing import (
    PriceQuote,
    indifference_residual,
    price_log,
    price_no_consumption,
    price_power,
    solve_indifference,
)
from .stats import rng_stream
from .value import ValueContext, g1_closed, g1_ode

PERTURBATION = 1e-3

#: default tolerances and instance counts per suite
TOLERANCES = {"minimax": 1e-4, "g1": 1e-8, "indifference": 1e-10}
DEFAULT_COUNTS = {"minimax": 20, "g1": 50, "indifference": 50}
SUITES = tuple(TOLERANCES)

# stream tag per suite so the instance lists are independent
_SUITE_KEY = {"minimax": 1, "g1": 2, "indifference": 3}


@dataclass
class SuiteReport:
    suite: str
    instances: int
    tolerance: float
    max_error: float = 0.0
    failures: int = 0
    first_failure: Optional[Dict[str, object]] = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def record(self, err: float, instance: Dict[str, object]) -> None:
        if not err <= self.max_error:
            self.max_error = err if math.isfinite(err) else math.inf
        if not err < self.tolerance:
            self.failures += 1
            if self.first_failure is None:
                self.first_failure = dict(instance, error=err)

    def as_row(self) -> Dict[str, object]:
        return {
            "suite": self.suite,
            "instances": self.instances,
            "failures": self.failures,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


# --- random instances --------------------------------------------------------


@dataclass(frozen=True)
class BoxInstance:
    amb: BoxSet
    box: PortfolioBox
    market: MarketParams
    p: float
    target: int

    def as_record(self) -> Dict[str, object]:
        return {
            "mu_low": self.amb.mu_low,
            "mu_high": self.amb.mu_high,
            "var_low": self.amb.var_low,
            "var_high": self.amb.var_high,
            "pi_low": self.box.pi_low,
            "pi_high": self.box.pi_high,
            "r": self.market.r,
            "R": self.market.R,
            "p": self.p,
            "target_regime": BOX_REGIMES[self.target],
        }


def random_box_instance(rng: np.random.Generator, target: int) -> BoxInstance:
    """A bounded Box instance whose saddle point sits in box regime ``target`` (index into ``BOX_REGIMES``).

    The drift endpoints are backed out from a sampled ``beta`` so all seven
    columns are exercised, not just the common interior ones.
    """
    p = float(rng.choice([-1.0, 0.5]))
    r = float(rng.uniform(0.0, 0.05))
    R = r + float(rng.uniform(0.005, 0.05))
    var_high = float(rng.uniform(0.02, 0.25))
    var_low = var_high * float(rng.uniform(0.2, 1.0))
    pi_low = -float(rng.uniform(0.5, 3.0))
    pi_high = float(rng.uniform(1.5, 4.0))
    s = (1 - p) * var_high
    gap = (R - r) / s
    w = float(rng.uniform(0.0, 0.1))
    u = float(rng.uniform(0.05, 0.95))
    if target == 0:
        mu_lo = R + s * (pi_high + u)
    elif target == 1:
        mu_lo = R + s * (1 + u * (pi_high - 1))
    elif target == 2:
        mu_lo = r + s * (1 + u * gap)
    elif target == 3:
        mu_lo = r + s * u
    if target <= 3:
        mu_hi = mu_lo + w
    elif target == 4:
        mu_lo, mu_hi = r - s * u, r + s * float(rng.uniform(0.05, 0.95))
    elif target == 5:
        mu_hi = r + s * u * pi_low
        mu_lo = mu_hi - w
    else:
        mu_hi = r + s * (pi_low - u)
        mu_lo = mu_hi - w
    return BoxInstance(
        BoxSet(mu_lo, mu_hi, var_low, var_high),
        PortfolioBox(pi_low, pi_high),
        MarketParams(r, R, 1.0),
        p,
        target,
    )


def random_power_context(rng: np.random.Generator) -> ValueContext:
    """Power utility with consumption and an unconstrained consumption box."""
    p = float(rng.choice([-2.0, -0.5, 0.3, 0.5, 0.8]))
    u = UtilityParams.power(p, lam=float(rng.uniform(0.05, 1.0)), rho=float(rng.uniform(0.0, 0.3)))
    T = float(rng.uniform(0.5, 5.0))
    return ValueContext(u, MarketParams(0.03, 0.03, T), float(rng.uniform(0.0, 0.3)))


@dataclass(frozen=True)
class PriceInstance:
    kind: str
    utility: UtilityParams
    T: float
    t: float
    x: float
    k1: float
    k2: float

    def as_record(self) -> Dict[str, object]:
        u = self.utility
        return {
            "kind": self.kind,
            "p": u.p,
            "lambda": u.lam,
            "rho": u.rho,
            "T": self.T,
            "t": self.t,
            "x": self.x,
            "k1": self.k1,
            "k2": self.k2,
        }

    def contexts(self) -> tuple:
        m = MarketParams(0.0, 0.0, self.T)
        return ValueContext(self.utility, m, self.k1), ValueContext(self.utility, m, self.k2)


def random_price_instance(rng: np.random.Generator, kind: Optional[str] = None) -> PriceInstance:
    kind = kind or str(rng.choice(["no_consumption", "log", "power"]))
    lam = 0.0 if kind == "no_consumption" else float(rng.uniform(0.05, 1.0))
    rho = float(rng.uniform(0.0, 0.5))
    if kind == "log":
        u = UtilityParams.log(lam=lam, rho=rho)
    else:
        u = UtilityParams.power(float(rng.choice([-1.0, 0.3, 0.5])), lam=lam, rho=rho)
    T = float(rng.uniform(0.5, 10.0))
    k1 = float(rng.uniform(0.0, 0.2))
    return PriceInstance(
        kind,
        u,
        T,
        T * float(rng.uniform(0.0, 0.99)),
        float(rng.uniform(0.1, 10.0)),
        k1,
        k1 + float(rng.uniform(0.0, 0.1)),
    )


def closed_form_price(inst: PriceInstance, k2: Optional[float] = None) -> PriceQuote:
    k2 = inst.k2 if k2 is None else k2
    if inst.kind == "no_consumption":
        return price_no_consumption(inst.t, inst.x, inst.k1, k2, inst.T)
    if inst.kind == "log":
        return price_log(inst.t, inst.x, inst.k1, k2, inst.utility, inst.T, with_turning_point=False)
    return price_power(inst.t, inst.x, inst.k1, k2, inst.utility, inst.T, with_turning_point=False)


# --- suites ------------------------------------------------------------------


def suite_minimax(seed: int, n: int, perturb: bool = False, grid: Optional[GridSpec] = None) -> SuiteReport:
    rep = SuiteReport("minimax", n, TOLERANCES["minimax"])
    rng = rng_stream(seed, _SUITE_KEY["minimax"])
    scale = 1 + PERTURBATION if perturb else 1.0
    for i in range(n):
        inst = random_box_instance(rng, i % len(BOX_REGIMES))
        k = k_box(inst.amb, inst.box, inst.market, inst.p).k * scale
        orc = k_minimax_oracle(inst.amb, inst.box, inst.market, inst.p, grid)
        err = max(abs(k - orc.sup_inf), abs(orc.inf_sup - orc.sup_inf))
        rep.record(err, dict(inst.as_record(), index=i, k_closed=k, sup_inf=orc.sup_inf, inf_sup=orc.inf_sup))
    return rep


def suite_g1(seed: int, n: int, perturb: bool = False) -> SuiteReport:
    rep = SuiteReport("g1", n, TOLERANCES["g1"])
    rng = rng_stream(seed, _SUITE_KEY["g1"])
    scale = 1 + PERTURBATION if perturb else 1.0
    for i in range(n):
        ctx = random_power_context(rng)
        t = ctx.T * float(rng.uniform(0.0, 0.9))
        closed_ctx = ValueContext(ctx.utility, ctx.market, ctx.k * scale, ctx.cons)
        a = g1_closed(t, closed_ctx)
        b = g1_ode(t, ctx, (ctx.T - t) / 4096)
        u = ctx.utility
        rep.record(
            abs(a - b),
            {"index": i, "p": u.p, "lambda": u.lam, "rho": u.rho, "k": ctx.k, "T": ctx.T, "t": t, "closed": a, "ode": b},
        )
    return rep


def suite_indifference(seed: int, n: int, perturb: bool = False) -> SuiteReport:
    rep = SuiteReport("indifference", n, TOLERANCES["indifference"])
    rng = rng_stream(seed, _SUITE_KEY["indifference"])
    scale = 1 + PERTURBATION if perturb else 1.0
    for i in range(n):
        inst = random_price_instance(rng)
        quote = closed_form_price(inst, inst.k2 * scale)
        ctx1, ctx2 = inst.contexts()
        resid = indifference_residual(quote, inst.t, inst.x, ctx1, ctx2)
        solved = solve_indifference(inst.t, inst.x, ctx1, ctx2)
        err = max(resid, abs(solved - quote.price) / inst.x)
        rep.record(err, dict(inst.as_record(), index=i, price=quote.price, solved=solved, residual=resid))
    return rep


_RUNNERS: Dict[str, Callable[..., SuiteReport]] = {
    "minimax": suite_minimax,
    "g1": suite_g1,
    "indifference": suite_indifference,
}


def run_suites(
    seed: int,
    suites: Sequence[str] = SUITES,
    counts: Optional[Dict[str, int]] = None,
    perturb: bool = False,
) -> List[SuiteReport]:
    counts = {**DEFAULT_COUNTS, **(counts or {})}
    return [_RUNNERS[name](seed, int(counts[name]), perturb) for name in suites]
