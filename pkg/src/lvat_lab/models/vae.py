"""Variational auto-encoder: the approximate-inference transformer.

The encoder emits (mu, log_var) of q(z|x); the decoder maps z back to the input space.
For LVAT the deterministic encoding is the posterior mean.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, as_tensor
from ..exceptions import CheckpointError, DataError, ShapeError
from ..nets.layers import Mlp, OutputActivation, ParamSet, init_params
from ..nets.losses import gaussian_kl

logger = logging.getLogger(__name__)

KIND = "vae"
LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


@dataclass
class VaeModel:
    """Encoder/decoder pair with a standard-normal latent prior."""

    encoder: Mlp
    decoder: Mlp
    latent_dim: int
    params: ParamSet

    kind = KIND

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ShapeError("latent_dim must be at least 1")
        if self.latent_dim > self.input_dim:
            raise ShapeError(
                f"latent_dim {self.latent_dim} exceeds input dimension {self.input_dim}"
            )
        if self.encoder.out_dim != 2 * self.latent_dim or self.decoder.in_dim != self.latent_dim:
            raise ShapeError("Encoder/decoder dimensions do not match latent_dim")
        if self.decoder.out_dim != self.input_dim:
            raise ShapeError("Decoder output must match the encoder input")

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def output_activation(self) -> OutputActivation:
        return self.decoder.output_activation

    @classmethod
    def build(
        cls,
        input_dim: int,
        latent_dim: int,
        hidden: Sequence[int] = (64, 64),
        output_activation: OutputActivation = "none",
        seed: Any = 0,
    ) -> VaeModel:
        """Create a freshly initialized VAE with mirrored hidden layers."""
        encoder = Mlp("encoder", (input_dim, *hidden, 2 * latent_dim))
        decoder = Mlp(
            "decoder", (latent_dim, *reversed(tuple(hidden)), input_dim), output_activation
        )
        params = init_params([encoder, decoder], seed)
        return cls(encoder=encoder, decoder=decoder, latent_dim=latent_dim, params=params)

    def header(self) -> dict[str, Any]:
        return {
            "kind": KIND,
            "input_dim": self.input_dim,
            "latent_dim": self.latent_dim,
            "hidden": list(self.encoder.dims[1:-1]),
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_checkpoint(cls, header: Mapping[str, Any], params: ParamSet) -> VaeModel:
        if header.get("kind") != KIND:
            raise CheckpointError(f"Expected a {KIND} checkpoint, got {header.get('kind')!r}")
        hidden = tuple(int(h) for h in header["hidden"])
        input_dim, latent_dim = int(header["input_dim"]), int(header["latent_dim"])
        encoder = Mlp("encoder", (input_dim, *hidden, 2 * latent_dim))
        decoder = Mlp(
            "decoder", (latent_dim, *reversed(hidden), input_dim), header["output_activation"]
        )
        missing = set(encoder.param_names() + decoder.param_names()) - set(params)
        if missing:
            raise CheckpointError(f"Checkpoint lacks parameters: {sorted(missing)}")
        return cls(encoder=encoder, decoder=decoder, latent_dim=latent_dim, params=params)

    # LatentTransformer protocol
    def to_latent(self, x: np.ndarray) -> np.ndarray:
        return encode_deterministic(self, x).values

    def from_latent(self, z: Any) -> Tensor:
        return decode(self, z)


def _weights(model: VaeModel, weights: Mapping[str, Tensor] | None) -> Mapping[str, Tensor]:
    return weights if weights is not None else model.params.constants()


def _posterior(
    model: VaeModel, x: Any, weights: Mapping[str, Tensor] | None
) -> tuple[Tensor, Tensor]:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"VAE expects (B, {model.input_dim}) inputs, got {x.shape}")
    h = model.encoder.forward(_weights(model, weights), x)
    mu = T.slice_axis(h, 0, model.latent_dim, axis=1)
    log_var = T.clip(
        T.slice_axis(h, model.latent_dim, 2 * model.latent_dim, axis=1), LOG_VAR_MIN, LOG_VAR_MAX
    )
    return mu, log_var


def sample_noise(seed: Any, batch: int, latent_dim: int) -> np.ndarray:
    """Standard-normal reparameterization noise from a seeded stream."""
    return np.random.default_rng(seed).standard_normal((batch, latent_dim))


def encode(
    model: VaeModel,
    x: Any,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
    noise: np.ndarray | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Posterior parameters and a reparameterized sample z = mu + exp(log_var / 2) * eps.

    Args:
        model: VAE.
        x: Batch of shape (B, D).
        seed: Seed for eps ~ N(0, I).
        weights: Optional parameter tensors (e.g. watched on a tape).
        noise: Explicit eps, overriding ``seed``.

    Returns:
        (mu, log_var, z_sample), each of shape (B, latent_dim).
    """
    mu, log_var = _posterior(model, x, weights)
    if noise is None:
        noise = sample_noise(seed, mu.shape[0], model.latent_dim)
    z = T.add(mu, T.mul(T.exp(T.mul(0.5, log_var)), noise))
    return mu, log_var, z


def encode_deterministic(
    model: VaeModel, x: Any, weights: Mapping[str, Tensor] | None = None
) -> Tensor:
    """Posterior mean mu, without sampling."""
    mu, _ = _posterior(model, x, weights)
    return mu


def decode(model: VaeModel, z: Any, weights: Mapping[str, Tensor] | None = None) -> Tensor:
    """Decoder mean x_hat for latent codes of shape (B, latent_dim)."""
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise ShapeError(f"Decoder expects (B, {model.latent_dim}) codes, got {z.shape}")
    return model.decoder.forward(_weights(model, weights), z)


def reconstruction_loss(model: VaeModel, x: Any, z: Any, weights=None) -> Tensor:
    """Per-batch mean reconstruction error of x from codes z.

    Bernoulli cross-entropy (from logits) for sigmoid decoders, otherwise
    0.5 * ||x - x_hat||^2.
    """
    x = as_tensor(x)
    w = _weights(model, weights)
    if model.output_activation == "sigmoid":
        if np.any(x.values < 0.0) or np.any(x.values > 1.0):
            raise DataError("Bernoulli reconstruction needs data in [0, 1]")
        logits = model.decoder.forward(w, as_tensor(z), pre_activation=True)
        per_dim = T.sub(T.softplus(logits), T.mul(x, logits))
    else:
        per_dim = T.mul(0.5, T.square(T.sub(x, decode(model, z, w))))
    return T.reduce_mean(T.reduce_sum(per_dim, axis=1))


def elbo_loss(
    model: VaeModel,
    x: Any,
    seed: Any,
    weights: Mapping[str, Tensor] | None = None,
    noise: np.ndarray | None = None,
) -> Tensor:
    """Negative ELBO: reconstruction error plus KL(q(z|x) || N(0, I)), mean over batch."""
    mu, log_var, z = encode(model, x, seed, weights, noise)
    return T.add(reconstruction_loss(model, x, z, weights), gaussian_kl(mu, log_var))
