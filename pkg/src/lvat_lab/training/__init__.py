"""Optimization and the two-stage training loop."""

from .optimizer import AdamState, adam_step, exponential_decay, lr_schedule
from .trainer import (
    METRICS_COLUMNS,
    TRANSFORMER_COLUMNS,
    ClassifierConfig,
    ClassifierRun,
    MetricsRow,
    TrainConfig,
    TransformerConfig,
    TransformerEpoch,
    TransformerRun,
    build_transformer,
    train_classifier,
    train_transformer,
)

__all__ = [
    "AdamState",
    "adam_step",
    "exponential_decay",
    "lr_schedule",
    "METRICS_COLUMNS",
    "TRANSFORMER_COLUMNS",
    "ClassifierConfig",
    "ClassifierRun",
    "MetricsRow",
    "TrainConfig",
    "TransformerConfig",
    "TransformerEpoch",
    "TransformerRun",
    "build_transformer",
    "train_classifier",
    "train_transformer",
]
