"""Online horizon-fair resource allocation."""

__version__ = "0.1.0"

from .fairness import FairnessParams, alpha_fair_value, conjugate_gradient, conjugate_value, fenchel_recover
from .policy import OHFPolicy, OSFPolicy, UtilityFeedback

__all__ = [
    "FairnessParams",
    "OHFPolicy",
    "OSFPolicy",
    "UtilityFeedback",
    "alpha_fair_value",
    "conjugate_gradient",
    "conjugate_value",
    "fenchel_recover",
]
