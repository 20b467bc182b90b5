"""Consistency costs: VAT, LVAT and the Pi-model baseline."""

from .lvat import lvat_cost, reconstruction_distances
from .perturb import (
    AdvResult,
    PerturbConfig,
    adv_direction,
    normalize_per_sample,
    random_direction_cost,
    random_unit,
)
from .pi_model import PiConfig, pi_cost
from .vat import vat_cost

__all__ = [
    "AdvResult",
    "PerturbConfig",
    "adv_direction",
    "normalize_per_sample",
    "random_direction_cost",
    "random_unit",
    "lvat_cost",
    "reconstruction_distances",
    "PiConfig",
    "pi_cost",
    "vat_cost",
]
