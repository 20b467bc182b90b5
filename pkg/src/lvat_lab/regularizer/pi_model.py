"""Pi-model baseline: agreement between two randomly perturbed copies of a batch."""

from __future__ import annotations

from collections.abc import Mapping
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor
from ..data.datasets import AugmentConfig, augment
from ..models.classifier import ClassifierModel, predict_logits
from ..utils.seeding import as_seed_sequence


class PiConfig(BaseModel):
    """Stochastic perturbation applied to each copy."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    noise_sigma: float = Field(default=0.1, ge=0, description="Std of additive Gaussian noise")
    augment: AugmentConfig | None = Field(default=None, description="Optional augmentation")


def _perturb(
    x: np.ndarray, cfg: PiConfig, seed: np.random.SeedSequence, image_shape
) -> np.ndarray:
    augment_seed, noise_seed = seed.spawn(2)
    if cfg.augment is not None:
        x = augment(x, image_shape, cfg.augment, augment_seed)
    if cfg.noise_sigma > 0:
        x = x + cfg.noise_sigma * np.random.default_rng(noise_seed).standard_normal(x.shape)
    return x


def pi_cost(
    model: ClassifierModel,
    x: Any,
    cfg: PiConfig,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
    image_shape: tuple[int, int] | None = None,
) -> Tensor:
    """Mean over the batch of ||f(x1) - f(x2)||^2 on the logits."""
    x = np.asarray(x, dtype=np.float64)
    first, second = as_seed_sequence(seed).spawn(2)
    x1 = _perturb(x, cfg, first, image_shape)
    x2 = _perturb(x, cfg, second, image_shape)
    diff = T.sub(predict_logits(model, x1, weights), predict_logits(model, x2, weights))
    return T.reduce_mean(T.reduce_sum(T.square(diff), axis=1))
