"""Virtual adversarial training in the latent space of a frozen transformer."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from typing import Any

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, row_norms
from ..exceptions import ShapeError
from ..models.classifier import ClassifierModel, predict_logits
from ..models.transformer import LatentTransformer
from ..nets.losses import kl_categorical
from .perturb import AdvResult, PerturbConfig, adv_direction

logger = logging.getLogger(__name__)


def reconstruction_distances(transformer: LatentTransformer, x: Any) -> np.ndarray:
    """Per-sample ||x - Dec(Enc(x))||_2 without any perturbation."""
    x = np.asarray(x, dtype=np.float64)
    return row_norms(x - transformer.from_latent(transformer.to_latent(x)).values)


def lvat_cost(
    model: ClassifierModel,
    transformer: LatentTransformer,
    x: Any,
    cfg: PerturbConfig,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
) -> AdvResult:
    """KL(f(x) || f(Dec(Enc(x) + r_lvat))) with ||r_lvat||_2 = epsilon per sample.

    The transformer is never recorded on a tape, so its parameters receive no gradient.

    Args:
        model: Classifier.
        transformer: Frozen VAE or flow.
        x: Batch of shape (B, D).
        cfg: Perturbation settings; ``space`` must be ``"latent"``.
        seed: Seed of the initial random latent direction.
        weights: Classifier parameter tensors to differentiate.

    Returns:
        AdvResult with input-space, latent-space and reconstruction distances.
    """
    if cfg.space != "latent":
        raise ValueError(f"lvat_cost perturbs latent space, got space={cfg.space!r}")
    x = np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    if transformer.input_dim != model.input_dim:
        raise ShapeError(
            f"Transformer input dimension {transformer.input_dim} does not match "
            f"classifier input dimension {model.input_dim}"
        )
    z = transformer.to_latent(x)
    frozen = model.params.constants()
    target = predict_logits(model, x, frozen)

    def perturbed_kl(r: Tensor) -> Tensor:
        decoded = transformer.from_latent(T.add(z, r))
        return kl_categorical(target, predict_logits(model, decoded, frozen))

    d = adv_direction(perturbed_kl, z.shape, seed, cfg)
    r = cfg.epsilon * d
    x_adv = transformer.from_latent(z + r).values
    per_sample = kl_categorical(target, predict_logits(model, x_adv, weights), reduction="none")
    return AdvResult(
        cost=T.reduce_mean(per_sample),
        r=r,
        x_adv=x_adv,
        distances=row_norms(x - x_adv),
        per_sample_cost=per_sample.values.copy(),
        latent_distances=row_norms(r),
        reconstruction_distances=reconstruction_distances(transformer, x),
    )
