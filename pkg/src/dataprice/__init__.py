"""Robust indifference pricing of data assets that shrink parameter ambiguity."""

from .core import (
    UNBOUNDED,
    BoxSet,
    ConsumptionBox,
    CorrelatedSet,
    DegenerateUtilityError,
    EllipsoidSet,
    KResult,
    MarketParams,
    NumericalError,
    PortfolioBox,
    SampleCISet,
    UnsupportedConfigurationError,
    UtilityKind,
    UtilityParams,
    ValidationError,
    box_contains,
)
from .k_index import k_box, k_correlated, k_ellipsoid, k_index, k_minimax_oracle, k_sample_ci
from .pricing import PriceQuote, find_turning_point, price_general, price_log, price_no_consumption, price_power
from .value import ValueContext, value_function

__version__ = "0.1.0"

__all__ = [
    "UNBOUNDED",
    "BoxSet",
    "ConsumptionBox",
    "CorrelatedSet",
    "DegenerateUtilityError",
    "EllipsoidSet",
    "KResult",
    "MarketParams",
    "NumericalError",
    "PortfolioBox",
    "PriceQuote",
    "SampleCISet",
    "UnsupportedConfigurationError",
    "UtilityKind",
    "UtilityParams",
    "ValidationError",
    "ValueContext",
    "box_contains",
    "find_turning_point",
    "k_box",
    "k_correlated",
    "k_ellipsoid",
    "k_index",
    "k_minimax_oracle",
    "k_sample_ci",
    "price_general",
    "price_log",
    "price_no_consumption",
    "price_power",
    "value_function",
]
