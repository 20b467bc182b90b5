"""Command-line interface of lvat-lab."""

from .models import EPSILON_GRIDS, N_LABELED_PRESETS, RunConfig

__all__ = ["EPSILON_GRIDS", "N_LABELED_PRESETS", "RunConfig"]
