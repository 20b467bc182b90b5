"""Virtual adversarial training in input space."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from typing import Any

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, row_norms
from ..models.classifier import ClassifierModel, predict_logits
from ..nets.losses import kl_categorical
from .perturb import AdvResult, PerturbConfig, adv_direction

logger = logging.getLogger(__name__)


def vat_cost(
    model: ClassifierModel,
    x: Any,
    cfg: PerturbConfig,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
) -> AdvResult:
    """KL(f(x) || f(x + r_vat)) with r_vat the adversarial direction scaled to epsilon.

    f(x) is a fixed target: gradients with respect to ``weights`` only flow through the
    perturbed branch. The direction search always uses the current parameter values.

    Args:
        model: Classifier.
        x: Batch of shape (B, D).
        cfg: Perturbation settings; ``space`` must be ``"input"``.
        seed: Seed of the initial random direction.
        weights: Parameter tensors to differentiate, e.g. watched on a training tape.

    Returns:
        AdvResult whose ``distances`` all equal epsilon.
    """
    if cfg.space != "input":
        raise ValueError(f"vat_cost perturbs input space, got space={cfg.space!r}")
    x = np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    frozen = model.params.constants()
    target = predict_logits(model, x, frozen)

    def perturbed_kl(r: Tensor) -> Tensor:
        return kl_categorical(target, predict_logits(model, T.add(x, r), frozen))

    d = adv_direction(perturbed_kl, x.shape, seed, cfg)
    r = cfg.epsilon * d
    x_adv = x + r
    per_sample = kl_categorical(target, predict_logits(model, x_adv, weights), reduction="none")
    return AdvResult(
        cost=T.reduce_mean(per_sample),
        r=r,
        x_adv=x_adv,
        distances=row_norms(x - x_adv),
        per_sample_cost=per_sample.values.copy(),
    )
