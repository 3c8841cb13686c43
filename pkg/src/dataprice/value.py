"""Deterministic ingredients of the robust value functions.

Power utility: ``J = x**p / p * exp(g1(t))`` where ``g1`` solves a
backward ODE driven by ``p * (K + f(g1)) - rho``.
Log utility: ``J = g21(t) log x + g22(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .core import (
    ConsumptionBox,
    DegenerateUtilityError,
    MarketParams,
    NumericalError,
    UnsupportedConfigurationError,
    UtilityParams,
    ValidationError,
)

# |y| below this uses the y = 0 branch of g12
_ZERO_RATE = 1e-12


@dataclass(frozen=True)
class ValueContext:
    utility: UtilityParams
    market: MarketParams
    k: float
    cons: ConsumptionBox = ConsumptionBox()

    @property
    def T(self) -> float:
        return self.market.T


def _check_time(t: float, T: float) -> float:
    if not 0.0 <= t <= T:
        raise ValidationError(f"time t={t} outside [0, T={T}]")
    return T - t


def g21(t: float, utility: UtilityParams, T: float) -> float:
    """Coefficient of ``log x`` in the log-utility value function."""
    tau = _check_time(t, T)
    lam, rho = utility.lam, utility.rho
    if rho == 0.0:
        return 1.0 + lam * tau
    # lam/rho + (1 - lam/rho) e^{-rho tau}, written to stay accurate as rho -> 0
    return math.exp(-rho * tau) - lam * math.expm1(-rho * tau) / rho


def _expm1_minus_z_over_z2(z: float) -> float:
    if abs(z) < 1e-4:
        return 0.5 + z * (1 / 6 + z * (1 / 24 + z / 120))
    return (math.expm1(z) - z) / (z * z)


def g23(t: float, utility: UtilityParams, T: float) -> float:
    """Discounted integral of ``g21`` over ``[t, T]``; the sensitivity of ``g22`` to ``K``."""
    tau = _check_time(t, T)
    lam, rho = utility.lam, utility.rho
    if rho == 0.0:
        return tau * (1.0 + 0.5 * lam * tau)
    z = rho * tau
    # (lam/rho^2) e^{-z} [e^z - 1 - z] = lam tau^2 e^{-z} (e^z - 1 - z)/z^2
    return math.exp(-z) * (lam * tau * tau * _expm1_minus_z_over_z2(z) + tau)


def g12(t: float, y: float, utility: UtilityParams, T: float) -> float:
    """``exp((g1 - log lam)/(1-p))`` for power utility at rate ``y``."""
    if not utility.is_power:
        raise ValidationError("g12 is defined for power utility")
    if utility.lam <= 0:
        raise ValidationError("g12 requires lam > 0")
    tau = _check_time(t, T)
    base = utility.lam ** (1.0 / (utility.p - 1.0))
    if abs(y) < _ZERO_RATE:
        return base + tau
    z = -y * tau
    return base * math.exp(z) - math.expm1(z) / y


def log_g12(t: float, y: float, utility: UtilityParams, T: float) -> float:
    """``log g12`` without forming ``lam^{1/(p-1)}``, which overflows for tiny ``lam``."""
    if not utility.is_power:
        raise ValidationError("g12 is defined for power utility")
    if utility.lam <= 0:
        raise ValidationError("g12 requires lam > 0")
    tau = _check_time(t, T)
    log_base = math.log(utility.lam) / (utility.p - 1.0)
    if abs(y) < _ZERO_RATE:
        a, b = log_base, math.log(tau) if tau > 0 else -math.inf
    else:
        z = -y * tau
        # -expm1(z)/y is positive for either sign of y
        w = -math.expm1(z) / y
        a, b = log_base + z, math.log(w) if w > 0 else -math.inf
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def f_consumption(x_q: float, utility: UtilityParams, cons: ConsumptionBox) -> float:
    """Maximum over the consumption box of the consumption part of the objective."""
    lam = utility.lam
    if lam == 0.0:
        return -cons.c_low
    scale = lam * math.exp(-x_q)
    if utility.is_power:
        p = utility.p
        c = cons.clamp(scale ** (1.0 / (1.0 - p)))
        if c == 0.0:
            if p < 0:
                raise DegenerateUtilityError("zero consumption with p < 0 gives -inf utility")
            return 0.0
        return scale / p * c**p - c
    c = cons.clamp(scale)
    if c == 0.0:
        raise DegenerateUtilityError("zero consumption with log utility gives -inf utility")
    return scale * math.log(c) - c


def _closed_form_applies(ctx: ValueContext) -> bool:
    return ctx.utility.lam == 0.0 or ctx.cons.unconstrained


def g1_closed(t: float, ctx: ValueContext) -> float:
    """Closed-form ``g1`` for power utility (no consumption, or unconstrained consumption)."""
    u = ctx.utility
    if not u.is_power:
        raise ValidationError("g1 is defined for power utility")
    tau = _check_time(t, ctx.T)
    p, lam, rho, k = u.p, u.lam, u.rho, ctx.k
    if lam == 0.0:
        return (p * k - p * ctx.cons.c_low - rho) * tau
    if not ctx.cons.unconstrained:
        raise UnsupportedConfigurationError("closed-form g1 needs consumption box [0, inf)")
    return math.log(lam) + (1.0 - p) * log_g12(t, (rho - p * k) / (1.0 - p), u, ctx.T)


def g1_rhs(g: float, ctx: ValueContext) -> float:
    """``dg1/dt`` as a function of ``g1``."""
    u = ctx.utility
    return -(u.p * (ctx.k + f_consumption(g, u, ctx.cons)) - u.rho)


def _rk4_backward(ctx: ValueContext, tau: float, n: int) -> float:
    # integrate in s = T - t, where dg/ds = -dg/dt
    h = tau / n
    g = 0.0
    for _ in range(n):
        k1 = -g1_rhs(g, ctx)
        k2 = -g1_rhs(g + 0.5 * h * k1, ctx)
        k3 = -g1_rhs(g + 0.5 * h * k2, ctx)
        k4 = -g1_rhs(g + h * k3, ctx)
        g += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return g


def g1_ode(t: float, ctx: ValueContext, step: float) -> float:
    """``g1`` by classical RK4 from ``g1(T) = 0`` back to ``t``.

    Runs at ``step`` and ``step / 2``; returns the finer result and raises
    :class:`NumericalError` if they disagree by more than 1e-6.
    """
    if not ctx.utility.is_power:
        raise ValidationError("g1 is defined for power utility")
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    tau = _check_time(t, ctx.T)
    if tau == 0.0:
        return 0.0
    n = max(1, math.ceil(tau / step - 1e-9))
    coarse = _rk4_backward(ctx, tau, n)
    fine = _rk4_backward(ctx, tau, 2 * n)
    if not abs(fine - coarse) <= 1e-6:
        raise NumericalError(
            f"RK4 step {tau / n:.3e} too large: halving changed g1 by {abs(fine - coarse):.3e}"
        )
    return fine


def _simpson(f: Callable[[float], float], a: float, b: float, tol: float, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) * (fa + 4 * flm + fm) / 6
        right = (b - m) * (fm + 4 * frm + fb) / 6
        delta = left + right - whole
        if abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        elif depth >= max_depth:
            raise NumericalError(f"quadrature did not converge on [{a}, {b}]")
        else:
            stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))
            stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth + 1))
    return total


def g22_quadrature(t: float, ctx: ValueContext, tol: float = 1e-10) -> float:
    """Constant term of the log-utility value function, by adaptive quadrature.

    The consumption envelope is evaluated at ``log g21(s)``, the shadow price
    of wealth in log units.
    """
    u = ctx.utility
    if u.is_power:
        raise ValidationError("g22 is defined for log utility")
    tau = _check_time(t, ctx.T)
    if tau == 0.0:
        return 0.0
    T, rho, k = ctx.T, u.rho, ctx.k

    def integrand(s: float) -> float:
        w = g21(s, u, T)
        return math.exp(-rho * (s - t)) * w * (k + f_consumption(math.log(w), u, ctx.cons))

    return _simpson(integrand, t, T, tol)


def value_parts(t: float, ctx: ValueContext, ode_step: float | None = None) -> Callable[[float], float]:
    """The value function as a callable in wealth, with the time part precomputed."""
    u = ctx.utility
    if u.is_power:
        if _closed_form_applies(ctx):
            g1 = g1_closed(t, ctx)
        else:
            tau = _check_time(t, ctx.T)
            g1 = g1_ode(t, ctx, ode_step or max(tau, 1e-12) / 2048)
        p, scale = u.p, math.exp(g1)

        def j_power(x: float) -> float:
            if x <= 0:
                raise ValidationError(f"wealth must be > 0, got {x}")
            return x**p / p * scale

        return j_power
    a, b = g21(t, u, ctx.T), g22_quadrature(t, ctx)

    def j_log(x: float) -> float:
        if x <= 0:
            raise ValidationError(f"wealth must be > 0, got {x}")
        return a * math.log(x) + b

    return j_log


def value_function(t: float, x: float, ctx: ValueContext) -> float:
    """Robust value ``J(t, x)`` for the index ``ctx.k``."""
    if x <= 0:
        raise ValidationError(f"wealth must be > 0, got {x}")
    return value_parts(t, ctx)(x)
