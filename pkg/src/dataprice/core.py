"""Shared domain types: utility and market parameters, constraint boxes,
ambiguity-set families and the Investment Opportunity Index result.

All types are frozen dataclasses and validate on construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np


class ValidationError(ValueError):
    """Input violates a documented invariant."""


class UnsupportedConfigurationError(ValidationError):
    """Inputs are valid but fall outside the hypotheses of a closed form."""


class DegenerateUtilityError(ValidationError):
    """Consumption box forces an infinite utility penalty."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or left its domain."""


class _Unbounded(enum.Enum):
    TOKEN = "unbounded"

    def __repr__(self) -> str:
        return "UNBOUNDED"


#: Marker for an infinite constraint bound (never a float sentinel).
UNBOUNDED = _Unbounded.TOKEN

Bound = Union[float, _Unbounded]


def _as_bound(value, name: str) -> Bound:
    if value is UNBOUNDED or value is None:
        return UNBOUNDED
    value = float(value)
    if math.isnan(value):
        raise ValidationError(f"{name} is NaN")
    if math.isinf(value):
        return UNBOUNDED
    return value


def _finite(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


class UtilityKind(enum.Enum):
    POWER = "power"
    LOG = "log"


@dataclass(frozen=True)
class UtilityParams:
    """CRRA utility with consumption weight ``lam`` and discount ``rho``.

    For ``LOG`` the exponent ``p`` is ignored; :attr:`risk_exponent` is 0.
    """

    kind: UtilityKind
    p: float = 0.0
    lam: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        kind = self.kind
        if isinstance(kind, str):
            try:
                kind = UtilityKind(kind.lower())
            except ValueError:
                raise ValidationError(f"unknown utility kind {self.kind!r}") from None
            object.__setattr__(self, "kind", kind)
        if not isinstance(kind, UtilityKind):
            raise ValidationError(f"unknown utility kind {self.kind!r}")
        p = _finite(self.p, "p")
        lam = _finite(self.lam, "lam")
        rho = _finite(self.rho, "rho")
        if kind is UtilityKind.POWER and not (p < 1.0 and p != 0.0):
            raise ValidationError(f"power utility needs p in (-inf,0)u(0,1), got p={p}")
        if kind is UtilityKind.LOG:
            p = 0.0
        if lam < 0:
            raise ValidationError(f"lam must be >= 0, got {lam}")
        if rho < 0:
            raise ValidationError(f"rho must be >= 0, got {rho}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def power(cls, p: float, lam: float = 0.0, rho: float = 0.0) -> "UtilityParams":
        return cls(UtilityKind.POWER, p, lam, rho)

    @classmethod
    def log(cls, lam: float = 0.0, rho: float = 0.0) -> "UtilityParams":
        return cls(UtilityKind.LOG, 0.0, lam, rho)

    @property
    def is_power(self) -> bool:
        return self.kind is UtilityKind.POWER

    @property
    def risk_exponent(self) -> float:
        """Exponent used inside the one-period objective (0 for log)."""
        return self.p if self.is_power else 0.0


@dataclass(frozen=True)
class MarketParams:
    """Lending rate ``r``, borrowing rate ``R >= r`` and horizon ``T > 0``."""

    r: float
    R: float
    T: float

    def __post_init__(self):
        r = _finite(self.r, "r")
        R = _finite(self.R, "R")
        T = _finite(self.T, "T")
        if R < r:
            raise ValidationError(f"borrowing rate R={R} must be >= lending rate r={r}")
        if T <= 0:
            raise ValidationError(f"horizon T must be > 0, got {T}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)


@dataclass(frozen=True)
class PortfolioBox:
    """Single-asset portfolio constraint ``[pi_low, pi_high]``, with
    ``pi_low <= 0`` and ``pi_high >= 1``. Either side may be :data:`UNBOUNDED`.
    """

    pi_low: Bound = UNBOUNDED
    pi_high: Bound = UNBOUNDED

    def __post_init__(self):
        lo = _as_bound(self.pi_low, "pi_low")
        hi = _as_bound(self.pi_high, "pi_high")
        if lo is not UNBOUNDED and lo > 0:
            raise ValidationError(f"pi_low must be <= 0, got {lo}")
        if hi is not UNBOUNDED and hi < 1:
            raise ValidationError(f"pi_high must be >= 1, got {hi}")
        object.__setattr__(self, "pi_low", lo)
        object.__setattr__(self, "pi_high", hi)

    @property
    def unconstrained(self) -> bool:
        return self.pi_low is UNBOUNDED and self.pi_high is UNBOUNDED


@dataclass(frozen=True)
class ConsumptionBox:
    """Consumption-rate constraint ``[c_low, c_high]``; ``c_high`` may be unbounded."""

    c_low: float = 0.0
    c_high: Bound = UNBOUNDED

    def __post_init__(self):
        lo = _finite(self.c_low, "c_low")
        hi = _as_bound(self.c_high, "c_high")
        if lo < 0:
            raise ValidationError(f"c_low must be >= 0, got {lo}")
        if hi is not UNBOUNDED and hi < lo:
            raise ValidationError(f"c_high={hi} must be >= c_low={lo}")
        object.__setattr__(self, "c_low", lo)
        object.__setattr__(self, "c_high", hi)

    @property
    def unconstrained(self) -> bool:
        return self.c_low == 0.0 and self.c_high is UNBOUNDED

    def clamp(self, c: float) -> float:
        if c < self.c_low:
            return self.c_low
        if self.c_high is not UNBOUNDED and c > self.c_high:
            return self.c_high
        return c


# --- ambiguity-set families -------------------------------------------------


@dataclass(frozen=True)
class BoxSet:
    """Drift interval times variance interval."""

    mu_low: float
    mu_high: float
    var_low: float
    var_high: float

    family = "box"

    def __post_init__(self):
        for name in ("mu_low", "mu_high", "var_low", "var_high"):
            object.__setattr__(self, name, _finite(getattr(self, name), name))
        if self.mu_low > self.mu_high:
            raise ValidationError(f"mu_low={self.mu_low} > mu_high={self.mu_high}")
        if not 0 < self.var_low <= self.var_high:
            raise ValidationError(
                f"need 0 < var_low <= var_high, got [{self.var_low}, {self.var_high}]"
            )


@dataclass(frozen=True)
class CorrelatedSet:
    """Curve ``mu = mu_low + a``, ``var = var_low + k a**q`` for ``a`` in ``[0, alpha_max]``."""

    mu_low: float
    var_low: float
    k: float
    q: float
    alpha_max: float

    family = "correlated"

    def __post_init__(self):
        for name in ("mu_low", "var_low", "k", "q", "alpha_max"):
            object.__setattr__(self, name, _finite(getattr(self, name), name))
        if self.var_low <= 0:
            raise ValidationError(f"var_low must be > 0, got {self.var_low}")
        if self.k <= 0:
            raise ValidationError(f"k must be > 0, got {self.k}")
        if not 0 < self.q < 1:
            raise ValidationError(f"q must lie in (0,1), got {self.q}")
        if self.alpha_max < 0:
            raise ValidationError(f"alpha_max must be >= 0, got {self.alpha_max}")

    def point(self, alpha):
        """(drift, variance) at curve parameter ``alpha``."""
        return self.mu_low + alpha, self.var_low + self.k * np.power(alpha, self.q)


@dataclass(frozen=True, eq=False)
class EllipsoidSet:
    """``{(mu, S): (mu - mu_hat)' S^-1 (mu - mu_hat) <= epsilon**2, S in candidates}``."""

    mu_hat: np.ndarray
    epsilon: float
    sigma_candidates: Tuple[np.ndarray, ...]
    cholesky: Tuple[np.ndarray, ...] = field(init=False, repr=False)

    family = "ellipsoid"

    def __post_init__(self):
        mu_hat = np.atleast_1d(np.asarray(self.mu_hat, dtype=float))
        if mu_hat.ndim != 1 or not np.all(np.isfinite(mu_hat)):
            raise ValidationError("mu_hat must be a finite vector")
        n = mu_hat.size
        eps = _finite(self.epsilon, "epsilon")
        if eps <= 0:
            raise ValidationError(f"epsilon must be > 0, got {eps}")
        if len(self.sigma_candidates) == 0:
            raise ValidationError("sigma_candidates must be non-empty")
        mats, chols = [], []
        for i, s in enumerate(self.sigma_candidates):
            m = np.atleast_2d(np.asarray(s, dtype=float))
            if m.shape != (n, n):
                raise ValidationError(f"candidate {i} has shape {m.shape}, expected {(n, n)}")
            if not np.allclose(m, m.T, rtol=1e-12, atol=1e-14):
                raise ValidationError(f"candidate {i} is not symmetric")
            try:
                chol = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise ValidationError(f"candidate {i} is not positive definite") from None
            m.setflags(write=False)
            chol.setflags(write=False)
            mats.append(m)
            chols.append(chol)
        mu_hat.setflags(write=False)
        object.__setattr__(self, "mu_hat", mu_hat)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "sigma_candidates", tuple(mats))
        object.__setattr__(self, "cholesky", tuple(chols))

    @property
    def dim(self) -> int:
        return self.mu_hat.size


@dataclass(frozen=True)
class SampleCISet:
    """Confidence-interval box built from a sample mean and sample variance."""

    mu_hat: float
    s2: float
    N: int
    alpha_conf: float

    family = "sample_ci"

    def __post_init__(self):
        object.__setattr__(self, "mu_hat", _finite(self.mu_hat, "mu_hat"))
        object.__setattr__(self, "s2", _finite(self.s2, "s2"))
        object.__setattr__(self, "alpha_conf", _finite(self.alpha_conf, "alpha_conf"))
        if self.s2 <= 0:
            raise ValidationError(f"sample variance must be > 0, got {self.s2}")
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError(f"sample size N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if not 0 < self.alpha_conf < 1:
            raise ValidationError(f"alpha_conf must lie in (0,1), got {self.alpha_conf}")


AmbiguitySet = Union[BoxSet, CorrelatedSet, EllipsoidSet, SampleCISet]


def box_contains(outer: BoxSet, inner: BoxSet) -> bool:
    """True iff ``inner`` is a subset of ``outer`` (interval containment per axis)."""
    return (
        outer.mu_low <= inner.mu_low
        and inner.mu_high <= outer.mu_high
        and outer.var_low <= inner.var_low
        and inner.var_high <= outer.var_high
    )


def correlated_nested(outer: CorrelatedSet, inner: CorrelatedSet) -> bool:
    """Sufficient parameter inequalities for ``inner`` to sit inside ``outer``."""
    if outer.k != inner.k or outer.q != inner.q:
        return False
    if not (outer.mu_low <= inner.mu_low and outer.var_low <= inner.var_low):
        return False
    need = max(
        inner.alpha_max + (inner.mu_low - outer.mu_low),
        (inner.alpha_max**inner.q + (inner.var_low - outer.var_low) / inner.k) ** (1.0 / inner.q),
    )
    return outer.alpha_max >= need * (1 - 1e-14)


def ellipsoid_nested(outer: EllipsoidSet, inner: EllipsoidSet) -> bool:
    """Same centre, smaller radius, and candidate list a subset of the outer one."""
    if outer.dim != inner.dim or not np.array_equal(outer.mu_hat, inner.mu_hat):
        return False
    if inner.epsilon > outer.epsilon:
        return False
    return all(
        any(np.allclose(s, o, rtol=0, atol=1e-15) for o in outer.sigma_candidates)
        for s in inner.sigma_candidates
    )


@dataclass(frozen=True)
class KResult:
    """Investment Opportunity Index with its saddle point."""

    k: float
    pi_star: Union[float, np.ndarray]
    mu_star: Union[float, np.ndarray]
    var_star: Union[float, np.ndarray]
    regime: str

    def as_record(self) -> dict:
        def plain(v):
            return np.asarray(v).tolist() if isinstance(v, np.ndarray) else v

        return {
            "k": self.k,
            "pi_star": plain(self.pi_star),
            "mu_star": plain(self.mu_star),
            "var_star": plain(self.var_star),
            "regime": self.regime,
        }


def ambiguity_from_record(rec: dict) -> AmbiguitySet:
    """Build an ambiguity set from a plain mapping with a ``family`` tag."""
    fam = rec.get("family")
    body = {k: v for k, v in rec.items() if k != "family"}
    try:
        if fam == "box":
            return BoxSet(**body)
        if fam == "correlated":
            return CorrelatedSet(**body)
        if fam == "ellipsoid":
            cands: Sequence = body.pop("sigma_candidates")
            return EllipsoidSet(sigma_candidates=tuple(cands), **body)
        if fam == "sample_ci":
            return SampleCISet(**body)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    except KeyError as exc:
        raise ValidationError(f"missing field {exc.args[0]}") from None
    raise ValidationError(f"unknown ambiguity family {fam!r}")


def ambiguity_to_record(amb: AmbiguitySet) -> dict:
    if isinstance(amb, EllipsoidSet):
        return {
            "family": amb.family,
            "mu_hat": amb.mu_hat.tolist(),
            "epsilon": amb.epsilon,
            "sigma_candidates": [s.tolist() for s in amb.sigma_candidates],
        }
    rec = {"family": amb.family}
    rec.update({k: getattr(amb, k) for k in amb.__dataclass_fields__})
    return rec


def bound_to_json(b: Bound) -> Optional[float]:
    return None if b is UNBOUNDED else b
