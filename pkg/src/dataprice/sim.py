"""Monte Carlo harness: simulate two datasets, price the second, average.

Each replication draws an initial dataset X of size ``n1`` and a purchased
dataset Y of size ``n2`` from the same normal law, builds the pre- and
post-purchase boxes from their confidence intervals and prices the move.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .core import (
    ConsumptionBox,
    MarketParams,
    PortfolioBox,
    UtilityParams,
    ValidationError,
)
from .pricing import price_general
from .stats import ambiguity_from_datasets, rng_stream, summarize

# stream tags inside one replication
_STREAM_X = 0
_STREAM_Y = 1


@dataclass(frozen=True)
class PricingSetup:
    x: float = 1.0
    t: float = 0.0
    utility: UtilityParams = UtilityParams.power(0.5, lam=0.2, rho=0.1)
    market: MarketParams = MarketParams(r=0.04, R=0.04, T=1.0)
    alpha_conf: float = 0.05

    def __post_init__(self):
        if not self.x > 0:
            raise ValidationError(f"pricing.x must be > 0, got {self.x}")
        if not 0 <= self.t <= self.market.T:
            raise ValidationError(f"pricing.t={self.t} outside [0, T={self.market.T}]")
        if not 0 < self.alpha_conf < 1:
            raise ValidationError(f"pricing.alpha_conf must lie in (0,1), got {self.alpha_conf}")


def _check_range(name: str, rng: Tuple[float, float], count: int) -> None:
    lo, hi = rng
    if not lo < hi:
        raise ValidationError(f"{name} must satisfy low < high, got {rng}")
    if count < 2:
        raise ValidationError(f"{name} needs at least 2 grid points, got {count}")


@dataclass(frozen=True)
class SampleSize:
    """Sweep over the purchased sample size ``n2``."""

    kind = "sample_size"


@dataclass(frozen=True)
class MuSigmaGrid:
    mu_range: Tuple[float, float]
    sigma_range: Tuple[float, float]
    grid_counts: Tuple[int, int]

    kind = "mu_sigma"

    def __post_init__(self):
        _check_range("sweep.mu_range", self.mu_range, self.grid_counts[0])
        _check_range("sweep.sigma_range", self.sigma_range, self.grid_counts[1])
        if self.sigma_range[0] <= 0:
            raise ValidationError("sweep.sigma_range must be positive")


@dataclass(frozen=True)
class PLambdaGrid:
    p_range: Tuple[float, float]
    lambda_range: Tuple[float, float]
    grid_counts: Tuple[int, int]

    kind = "p_lambda"

    def __post_init__(self):
        _check_range("sweep.p_range", self.p_range, self.grid_counts[0])
        _check_range("sweep.lambda_range", self.lambda_range, self.grid_counts[1])
        lo, hi = self.p_range
        if lo < 0 < hi or lo == 0 or hi == 0 or hi >= 1:
            raise ValidationError("sweep.p_range must lie inside (-inf,0) or (0,1)")
        if self.lambda_range[0] < 0:
            raise ValidationError("sweep.lambda_range must be non-negative")


Sweep = Union[SampleSize, MuSigmaGrid, PLambdaGrid]


@dataclass(frozen=True)
class ExperimentConfig:
    mu_true: float = 0.1
    sigma_true: float = 0.2
    n1: int = 1000
    n2_values: Tuple[int, ...] = tuple(range(2000, 20001, 2000))
    m_reps: int = 1000
    seed: int = 20240601
    pricing: PricingSetup = PricingSetup()
    sweep: Sweep = SampleSize()

    def __post_init__(self):
        object.__setattr__(self, "n2_values", tuple(int(n) for n in self.n2_values))
        if not self.sigma_true > 0:
            raise ValidationError(f"sigma_true must be > 0, got {self.sigma_true}")
        if self.n1 < 2:
            raise ValidationError(f"n1 must be >= 2, got {self.n1}")
        if not self.n2_values:
            raise ValidationError("n2_values must not be empty")
        for n2 in self.n2_values:
            if n2 <= self.n1:
                raise ValidationError(f"every n2 must exceed n1={self.n1}, got {n2}")
        if not isinstance(self.sweep, SampleSize) and len(self.n2_values) != 1:
            raise ValidationError("grid sweeps take exactly one n2 value")
        if self.m_reps < 1:
            raise ValidationError(f"m_reps must be >= 1, got {self.m_reps}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class SweepResult:
    axis_names: Tuple[str, ...]
    axis_values: Tuple[Tuple[float, ...], ...]
    mean_price: Tuple[float, ...]
    std_error: Tuple[float, ...]
    m_effective: Tuple[int, ...]

    def rows(self) -> List[Dict[str, float]]:
        out = []
        for vals, m, se, n in zip(self.axis_values, self.mean_price, self.std_error, self.m_effective):
            row = dict(zip(self.axis_names, vals))
            row.update(mean_price=m, std_error=se, m_effective=n)
            out.append(row)
        return out

    def as_array(self, name: str = "mean_price") -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


# --- single replication ------------------------------------------------------


def simulate_dataset(mu: float, sigma: float, n: int, stream: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. normal draws with mean ``mu`` and standard deviation ``sigma``."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    return mu + sigma * stream.standard_normal(n)


def price_from_samples(x_samples: Sequence[float], y_samples: Sequence[float], pricing: PricingSetup) -> float:
    """Price of dataset Y to an investor who already holds dataset X."""
    b1, b2 = ambiguity_from_datasets(summarize(x_samples), summarize(y_samples), pricing.alpha_conf)
    quote = price_general(
        pricing.t,
        pricing.x,
        b1,
        b2,
        PortfolioBox(),
        ConsumptionBox(),
        pricing.utility,
        pricing.market,
        with_turning_point=False,
    )
    if not 0 <= quote.price < pricing.x:
        raise ValidationError(f"replication price {quote.price} outside [0, {pricing.x})")
    return quote.price


def run_replication(cfg: ExperimentConfig, n2: int, rep_index: int, grid_index: int = 0) -> float:
    """One replication; reproducible from ``(cfg.seed, grid_index, rep_index)``."""
    xs = simulate_dataset(cfg.mu_true, cfg.sigma_true, cfg.n1, rng_stream(cfg.seed, grid_index, rep_index, _STREAM_X))
    ys = simulate_dataset(cfg.mu_true, cfg.sigma_true, n2, rng_stream(cfg.seed, grid_index, rep_index, _STREAM_Y))
    try:
        return price_from_samples(xs, ys, cfg.pricing)
    except ValidationError as exc:
        raise ValidationError(f"replication grid={grid_index} rep={rep_index} n2={n2}: {exc}") from exc


# --- sweeps ------------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    index: int
    values: Tuple[float, ...]
    cfg: ExperimentConfig
    n2: int


def grid_points(cfg: ExperimentConfig) -> Tuple[Tuple[str, ...], List[GridPoint]]:
    """Axis names and the per-point configurations, in output order."""
    sw = cfg.sweep
    if isinstance(sw, SampleSize):
        pts = [GridPoint(i, (float(n2),), cfg, n2) for i, n2 in enumerate(cfg.n2_values)]
        return ("n2",), pts
    n2 = cfg.n2_values[0]
    pts = []
    if isinstance(sw, MuSigmaGrid):
        mus = np.linspace(*sw.mu_range, sw.grid_counts[0])
        sigmas = np.linspace(*sw.sigma_range, sw.grid_counts[1])
        for i, mu in enumerate(mus):
            for j, sg in enumerate(sigmas):
                sub = replace(cfg, mu_true=float(mu), sigma_true=float(sg))
                pts.append(GridPoint(len(pts), (float(mu), float(sg)), sub, n2))
        return ("mu", "sigma"), pts
    if isinstance(sw, PLambdaGrid):
        ps = np.linspace(*sw.p_range, sw.grid_counts[0])
        lams = np.linspace(*sw.lambda_range, sw.grid_counts[1])
        base = cfg.pricing.utility
        for p in ps:
            for lam in lams:
                u = UtilityParams.power(float(p), lam=float(lam), rho=base.rho)
                sub = replace(cfg, pricing=replace(cfg.pricing, utility=u))
                pts.append(GridPoint(len(pts), (float(p), float(lam)), sub, n2))
        return ("p", "lambda"), pts
    raise ValidationError(f"unknown sweep {sw!r}")


def _run_block(args: Tuple[GridPoint, int, int]) -> Tuple[int, int, List[float]]:
    pt, start, stop = args
    return pt.index, start, [run_replication(pt.cfg, pt.n2, k, pt.index) for k in range(start, stop)]


def _blocks(points: Sequence[GridPoint], m_reps: int, size: int):
    for pt in points:
        for start in range(0, m_reps, size):
            yield pt, start, min(start + size, m_reps)


def run_sweep(cfg: ExperimentConfig, workers: int = 1, block_size: int = 250) -> SweepResult:
    """Average ``m_reps`` replication prices per grid point.

    The result does not depend on ``workers`` or ``block_size``: every price
    comes from its own keyed stream and the reduction runs in index order.
    """
    names, points = grid_points(cfg)
    prices = np.empty((len(points), cfg.m_reps))
    blocks = list(_blocks(points, cfg.m_reps, block_size))
    if workers <= 1:
        results = map(_run_block, blocks)
        for gi, start, vals in results:
            prices[gi, start : start + len(vals)] = vals
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for gi, start, vals in pool.map(_run_block, blocks):
                prices[gi, start : start + len(vals)] = vals
    means, ses = [], []
    m = cfg.m_reps
    for row in prices:
        mean = math.fsum(row.tolist()) / m
        if m > 1:
            var = math.fsum(((row - mean) ** 2).tolist()) / (m - 1)
            ses.append(math.sqrt(var / m))
        else:
            ses.append(0.0)
        means.append(mean)
    return SweepResult(
        axis_names=names,
        axis_values=tuple(pt.values for pt in points),
        mean_price=tuple(means),
        std_error=tuple(ses),
        m_effective=tuple(m for _ in points),
    )


# --- output ------------------------------------------------------------------


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def records_to_csv(rows: Sequence[Dict[str, object]]) -> str:
    """CSV with a header row, ``.17g`` floats and LF line endings."""
    if not rows:
        return ""
    buf = io.StringIO()
    header = list(rows[0].keys())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_number(r.get(k)) for k in header])
    return buf.getvalue()


def records_to_json(payload: object) -> str:
    return json.dumps(payload, indent=2, sort_keys=False, allow_nan=False) + "\n"


SCHEMA_VERSION = 1


def sweep_to_csv(result: SweepResult) -> str:
    return records_to_csv(result.rows())


def sweep_to_json(result: SweepResult) -> str:
    return records_to_json({"schema_version": SCHEMA_VERSION, "rows": result.rows()})
