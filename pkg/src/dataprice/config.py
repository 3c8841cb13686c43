"""JSON config documents for the CLI.

Every error message starts with the dotted path of the offending key, for
instance ``market.r: missing required key``.
"""

from __future__ import annotations

import json
import math
from typing import Any, Callable, Dict, Iterable, Optional, Tuple, TypeVar

from .core import (
    UNBOUNDED,
    AmbiguitySet,
    ConsumptionBox,
    MarketParams,
    PortfolioBox,
    UtilityParams,
    ValidationError,
    ambiguity_from_record,
)
from .sim import ExperimentConfig, MuSigmaGrid, PLambdaGrid, PricingSetup, SampleSize

T = TypeVar("T")
_MISSING = object()


class Doc:
    """A mapping that knows its own key path and reports unused keys."""

    def __init__(self, data: Any, path: str = ""):
        if not isinstance(data, dict):
            raise ValidationError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self._seen: set = set()

    def _key(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default: Any = _MISSING) -> Any:
        self._seen.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise ValidationError(f"{self._key(key)}: missing required key")
            return default
        return self.data[key]

    def number(self, key: str, default: Any = _MISSING) -> float:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"{self._key(key)}: expected a number, got {v!r}")
        if not math.isfinite(v):
            raise ValidationError(f"{self._key(key)}: must be finite")
        return float(v)

    def bound(self, key: str, default: Any = None):
        """A number or ``null`` (unbounded)."""
        v = self.raw(key, default)
        if v is None:
            return UNBOUNDED
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"{self._key(key)}: expected a number or null, got {v!r}")
        return float(v)

    def integer(self, key: str, default: Any = _MISSING) -> int:
        v = self.raw(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError(f"{self._key(key)}: expected an integer, got {v!r}")
        return v

    def string(self, key: str, choices: Iterable[str], default: Any = _MISSING) -> str:
        v = self.raw(key, default)
        choices = tuple(choices)
        if v not in choices:
            raise ValidationError(f"{self._key(key)}: expected one of {list(choices)}, got {v!r}")
        return v

    def pair(self, key: str, conv: Callable[[Any], T] = float, default: Any = _MISSING) -> Tuple[T, T]:
        v = self.raw(key, default)
        if not isinstance(v, (list, tuple)) or len(v) != 2:
            raise ValidationError(f"{self._key(key)}: expected a two-element list, got {v!r}")
        try:
            return conv(v[0]), conv(v[1])
        except (TypeError, ValueError):
            raise ValidationError(f"{self._key(key)}: bad element in {v!r}") from None

    def child(self, key: str, default: Any = _MISSING) -> Optional["Doc"]:
        v = self.raw(key, default)
        if v is None:
            return None
        return Doc(v, self._key(key))

    def build(self, ctor: Callable[..., T], *args, **kwargs) -> T:
        """Call a constructor and prefix its validation errors with this path."""
        try:
            return ctor(*args, **kwargs)
        except ValidationError as exc:
            raise ValidationError(f"{self.path or '<root>'}: {exc}") from None

    def finish(self) -> None:
        extra = sorted(set(self.data) - self._seen)
        if extra:
            raise ValidationError(f"{self._key(extra[0])}: unknown key")


def load_json(text: str) -> Doc:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"<root>: invalid JSON ({exc})") from None
    return Doc(data)


# --- section readers ---------------------------------------------------------


def read_utility(d: Doc) -> UtilityParams:
    kind = d.string("kind", ("power", "log"))
    lam = d.number("lambda", 0.0)
    rho = d.number("rho", 0.0)
    if kind == "power":
        out = d.build(UtilityParams.power, d.number("p"), lam=lam, rho=rho)
    else:
        out = d.build(UtilityParams.log, lam=lam, rho=rho)
    d.finish()
    return out


def read_market(d: Doc) -> MarketParams:
    r = d.number("r")
    out = d.build(MarketParams, r, d.number("R", r), d.number("T"))
    d.finish()
    return out


def read_portfolio(d: Optional[Doc]) -> PortfolioBox:
    if d is None:
        return PortfolioBox()
    out = d.build(PortfolioBox, d.bound("pi_low"), d.bound("pi_high"))
    d.finish()
    return out


def read_consumption(d: Optional[Doc]) -> ConsumptionBox:
    if d is None:
        return ConsumptionBox()
    out = d.build(ConsumptionBox, d.number("c_low", 0.0), d.bound("c_high"))
    d.finish()
    return out


_FAMILY_FIELDS = {
    "box": ("mu_low", "mu_high", "var_low", "var_high"),
    "correlated": ("mu_low", "var_low", "k", "q", "alpha_max"),
    "ellipsoid": ("mu_hat", "epsilon", "sigma_candidates"),
    "sample_ci": ("mu_hat", "s2", "N", "alpha_conf"),
}


def read_ambiguity(d: Doc) -> AmbiguitySet:
    fam = d.string("family", tuple(_FAMILY_FIELDS))
    for key in _FAMILY_FIELDS[fam]:
        if fam == "ellipsoid" and key != "epsilon":
            d.raw(key)
        elif key == "N":
            d.integer(key)
        else:
            d.number(key)
    d.finish()
    return d.build(ambiguity_from_record, dict(d.data))


def read_p(root: Doc) -> Tuple[float, Optional[UtilityParams]]:
    """Risk exponent from a ``utility`` section or a bare ``p``."""
    if root.has("utility"):
        u = read_utility(root.child("utility"))
        return u.risk_exponent, u
    return root.number("p"), None


_SWEEP_KINDS = ("sample_size", "mu_sigma", "p_lambda")


def read_sweep(d: Optional[Doc]):
    if d is None:
        return SampleSize()
    kind = d.string("kind", _SWEEP_KINDS)
    if kind == "sample_size":
        out = SampleSize()
    elif kind == "mu_sigma":
        out = d.build(MuSigmaGrid, d.pair("mu_range"), d.pair("sigma_range"), d.pair("grid_counts", _as_int))
    else:
        out = d.build(PLambdaGrid, d.pair("p_range"), d.pair("lambda_range"), d.pair("grid_counts", _as_int))
    d.finish()
    return out


def _as_int(v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(v)
    return v


def read_experiment(root: Doc, seed: int) -> ExperimentConfig:
    """Experiment document; missing keys fall back to the desk-scale defaults."""
    base = ExperimentConfig()
    market = read_market(root.child("market")) if root.has("market") else base.pricing.market
    utility = read_utility(root.child("utility")) if root.has("utility") else base.pricing.utility
    pr = root.child("pricing", None)
    if pr is not None:
        pricing = pr.build(
            PricingSetup,
            x=pr.number("x", base.pricing.x),
            t=pr.number("t", base.pricing.t),
            utility=utility,
            market=market,
            alpha_conf=pr.number("alpha_conf", base.pricing.alpha_conf),
        )
        pr.finish()
    else:
        pricing = root.build(PricingSetup, utility=utility, market=market)
    n2 = root.raw("n2_values", list(base.n2_values))
    if not isinstance(n2, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in n2):
        raise ValidationError(f"{root._key('n2_values')}: expected a list of integers")
    return root.build(
        ExperimentConfig,
        mu_true=root.number("mu_true", base.mu_true),
        sigma_true=root.number("sigma_true", base.sigma_true),
        n1=root.integer("n1", base.n1),
        n2_values=tuple(n2),
        m_reps=root.integer("m_reps", base.m_reps),
        seed=seed,
        pricing=pricing,
        sweep=read_sweep(root.child("sweep", None)),
    )


def experiment_to_record(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Echo of the effective experiment settings, for output provenance."""
    u, m, sw = cfg.pricing.utility, cfg.pricing.market, cfg.sweep
    rec: Dict[str, Any] = {
        "mu_true": cfg.mu_true,
        "sigma_true": cfg.sigma_true,
        "n1": cfg.n1,
        "n2_values": list(cfg.n2_values),
        "m_reps": cfg.m_reps,
        "seed": cfg.seed,
        "utility": {"kind": u.kind.value, "p": u.p, "lambda": u.lam, "rho": u.rho},
        "market": {"r": m.r, "R": m.R, "T": m.T},
        "pricing": {"x": cfg.pricing.x, "t": cfg.pricing.t, "alpha_conf": cfg.pricing.alpha_conf},
        "sweep": {"kind": sw.kind},
    }
    if isinstance(sw, MuSigmaGrid):
        rec["sweep"].update(mu_range=list(sw.mu_range), sigma_range=list(sw.sigma_range), grid_counts=list(sw.grid_counts))
    elif isinstance(sw, PLambdaGrid):
        rec["sweep"].update(p_range=list(sw.p_range), lambda_range=list(sw.lambda_range), grid_counts=list(sw.grid_counts))
    return rec
