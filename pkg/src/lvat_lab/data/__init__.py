"""Synthetic datasets, batching and persistence."""

from .datasets import (
    AugmentConfig,
    Batch,
    BatchStream,
    Dataset,
    augment,
    batches,
    gen_circles,
    gen_grid_patterns,
    gen_two_moons,
    standardize,
    subsample_labels,
)
from .storage import (
    load_checkpoint,
    load_dataset,
    load_json,
    save_checkpoint,
    save_dataset,
    save_json,
    save_records,
)

__all__ = [
    "AugmentConfig",
    "Batch",
    "BatchStream",
    "Dataset",
    "augment",
    "batches",
    "gen_circles",
    "gen_grid_patterns",
    "gen_two_moons",
    "standardize",
    "subsample_labels",
    "load_checkpoint",
    "load_dataset",
    "load_json",
    "save_checkpoint",
    "save_dataset",
    "save_json",
    "save_records",
]
