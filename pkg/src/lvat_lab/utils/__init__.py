"""Utilities module."""

from .logger import configure_logging, get_logger
from .seeding import as_seed_sequence, epoch_seed

__all__ = ["configure_logging", "get_logger", "as_seed_sequence", "epoch_seed"]
