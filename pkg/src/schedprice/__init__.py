"""schedprice: choice modeling and assortment price optimization for
scheduled-service options (dated lead times with optional time windows)."""

from .calendar import DayClass, DayOfWeek, LeadTimeCalendar, day_class, reference_prices
from .mnl import (
    BucketMap,
    ChoiceData,
    ChoiceObservation,
    FitConfig,
    MnlParams,
    UnidentifiableFitError,
    choice_probabilities,
    default_bucket_map,
    fit_mle,
    negative_log_likelihood,
    nll_gradient,
    single_bucket_map,
    utilities,
)
from .pricing import (
    GridConfig,
    Guardrails,
    ObjectiveConfig,
    PricingPolicy,
    evaluate_objective,
    optimize_two_param,
    policy_prices,
)
from .tree import SegmentationTree, TreeConfig, fit_tree, route
from .dataset import TrainingSet, subsample

__version__ = "0.1.0"

__all__ = [
    "BucketMap",
    "ChoiceData",
    "ChoiceObservation",
    "DayClass",
    "DayOfWeek",
    "FitConfig",
    "GridConfig",
    "Guardrails",
    "LeadTimeCalendar",
    "MnlParams",
    "ObjectiveConfig",
    "PricingPolicy",
    "SegmentationTree",
    "TrainingSet",
    "TreeConfig",
    "UnidentifiableFitError",
    "choice_probabilities",
    "day_class",
    "default_bucket_map",
    "evaluate_objective",
    "fit_mle",
    "fit_tree",
    "negative_log_likelihood",
    "nll_gradient",
    "optimize_two_param",
    "policy_prices",
    "reference_prices",
    "route",
    "single_bucket_map",
    "subsample",
    "utilities",
]
