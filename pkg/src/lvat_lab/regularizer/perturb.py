"""Perturbation settings, results and the finite-difference power method.

The adversarial direction is the dominant eigenvector of the Hessian of the
consistency cost at r = 0. It is approximated by repeatedly probing the cost at a
tiny step ``xi * d`` and replacing d by the normalized gradient with respect to d.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..autodiff import tensor as T
from ..autodiff.tensor import Tape, Tensor, row_norms
from ..models.classifier import ClassifierModel, predict_logits
from ..nets.losses import kl_categorical

if TYPE_CHECKING:
    from ..models.transformer import LatentTransformer

logger = logging.getLogger(__name__)

PerturbSpace = Literal["input", "latent"]
CostFn = Callable[[Tensor], Tensor]


class PerturbConfig(BaseModel):
    """Magnitude and probing settings of an adversarial perturbation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(default=1.0, gt=0, description="L2 norm of the injected perturbation")
    xi: float = Field(default=1e-6, gt=0, description="Power-method finite-difference step")
    power_iters: int = Field(default=1, ge=1, description="Power-method refinements")
    space: PerturbSpace = Field(default="input", description="Where the perturbation is added")


@dataclass
class AdvResult:
    """Consistency cost and the adversarial example behind it."""

    cost: Tensor
    r: np.ndarray
    x_adv: np.ndarray
    distances: np.ndarray
    per_sample_cost: np.ndarray
    latent_distances: np.ndarray | None = None
    reconstruction_distances: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return int(self.x_adv.shape[0])


def random_unit(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Gaussian draw normalized to unit L2 norm per sample (leading axis)."""
    d = rng.standard_normal(shape)
    return d / row_norms(d).reshape((-1,) + (1,) * (len(shape) - 1))


def normalize_per_sample(g: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Scale every sample of g to unit norm; rows with a zero gradient take ``fallback``."""
    norms = row_norms(g)
    ok = np.isfinite(norms) & (norms > 0.0)
    if not np.all(ok):
        logger.debug(f"Zero gradient for {int(np.count_nonzero(~ok))} sample(s); keeping fallback")
    expand = (-1,) + (1,) * (g.ndim - 1)
    safe = np.where(ok, norms, 1.0).reshape(expand)
    return np.where(ok.reshape(expand), g / safe, fallback)


def adv_direction(
    cost_fn: CostFn, shape: tuple[int, ...], seed: Any, cfg: PerturbConfig
) -> np.ndarray:
    """Approximate the most sensitive unit direction of ``cost_fn`` around zero.

    Args:
        cost_fn: Maps a perturbation tensor of ``shape`` to a scalar cost.
        shape: Batch-leading shape of the perturbation.
        seed: Seed of the initial random direction.
        cfg: Finite-difference step and number of power iterations.

    Returns:
        Array of ``shape`` with unit L2 norm per sample.
    """
    start = random_unit(np.random.default_rng(seed), shape)
    d = start
    for _ in range(cfg.power_iters):
        tape = Tape()
        d_t = tape.watch(d)
        cost = cost_fn(T.mul(d_t, cfg.xi))
        if cost.is_recorded and cost.tape is tape:
            grad = tape.backward(cost)[d_t]
        else:
            grad = np.zeros(shape)
        d = normalize_per_sample(grad, start)
    return d


def random_direction_cost(
    model: ClassifierModel,
    x: np.ndarray,
    cfg: PerturbConfig,
    seed: Any,
    transformer: LatentTransformer | None = None,
) -> float:
    """Consistency cost at a random unit direction of the same epsilon.

    With a transformer the direction is drawn in its latent space and decoded.
    """
    x = np.asarray(x, dtype=np.float64)
    target = predict_logits(model, x)
    rng = np.random.default_rng(seed)
    if transformer is None:
        x_rand = x + cfg.epsilon * random_unit(rng, x.shape)
    else:
        z = transformer.to_latent(x)
        x_rand = transformer.from_latent(z + cfg.epsilon * random_unit(rng, z.shape)).values
    return kl_categorical(target, predict_logits(model, x_rand)).item()
