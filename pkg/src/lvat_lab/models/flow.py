"""Affine-coupling normalizing flow: the exact-inference transformer.

Couplings alternate even/odd masks; a fixed seeded permutation follows every second
coupling so that all dimensions get transformed. Log-scales are bounded by
``s_max * tanh(.)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..autodiff import tensor as T
from ..autodiff.tensor import Tensor, as_tensor
from ..exceptions import CheckpointError, ShapeError
from ..nets.layers import Mlp, ParamSet, init_params
from ..utils.seeding import as_seed_sequence

logger = logging.getLogger(__name__)

KIND = "flow"
DEFAULT_S_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Permutation:
    """Fixed reordering of dimensions; contributes nothing to the log-determinant."""

    perm: tuple[int, ...]

    @property
    def inverse(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.argsort(self.perm))

    def forward(self, x: Tensor) -> Tensor:
        return T.take(x, self.perm, axis=1)

    def backward(self, z: Tensor) -> Tensor:
        return T.take(z, self.inverse, axis=1)


@dataclass(frozen=True)
class AffineCoupling:
    """y = x * mask + (1 - mask) * (x * exp(s) + t), with (s, t) conditioned on x * mask."""

    mask: tuple[int, ...]
    conditioner: Mlp
    s_max: float = DEFAULT_S_MAX

    def __post_init__(self):
        ones = sum(self.mask)
        if ones == 0 or ones == len(self.mask):
            raise ShapeError("Coupling mask must split dimensions into two non-empty sets")
        if self.conditioner.in_dim != len(self.mask) or self.conditioner.out_dim != 2 * len(
            self.mask
        ):
            raise ShapeError("Conditioner must map D inputs to 2D outputs")

    @property
    def dim(self) -> int:
        return len(self.mask)

    def _scale_shift(
        self, weights: Mapping[str, Tensor], passthrough: Tensor
    ) -> tuple[Tensor, Tensor]:
        keep = 1.0 - np.asarray(self.mask, dtype=np.float64)
        h = self.conditioner.forward(weights, passthrough)
        log_scale = T.mul(T.mul(self.s_max, T.tanh(T.slice_axis(h, 0, self.dim, axis=1))), keep)
        shift = T.mul(T.slice_axis(h, self.dim, 2 * self.dim, axis=1), keep)
        return log_scale, shift

    def forward(self, weights: Mapping[str, Tensor], x: Tensor) -> tuple[Tensor, Tensor]:
        mask = np.asarray(self.mask, dtype=np.float64)
        passthrough = T.mul(x, mask)
        log_scale, shift = self._scale_shift(weights, passthrough)
        moved = T.add(T.mul(x, T.exp(log_scale)), shift)
        y = T.add(passthrough, T.mul(moved, 1.0 - mask))
        return y, T.reduce_sum(log_scale, axis=1)

    def backward(self, weights: Mapping[str, Tensor], y: Tensor) -> Tensor:
        mask = np.asarray(self.mask, dtype=np.float64)
        passthrough = T.mul(y, mask)
        log_scale, shift = self._scale_shift(weights, passthrough)
        moved = T.mul(T.sub(y, shift), T.exp(T.neg(log_scale)))
        return T.add(passthrough, T.mul(moved, 1.0 - mask))


FlowLayer = Permutation | AffineCoupling


@dataclass
class FlowModel:
    """Stack of invertible layers with equal input and latent dimension."""

    dim: int
    layers: list[FlowLayer]
    params: ParamSet

    kind = KIND

    def __post_init__(self):
        for layer in self.layers:
            size = len(layer.perm) if isinstance(layer, Permutation) else layer.dim
            if size != self.dim:
                raise ShapeError(f"Flow layer of size {size} in a flow of dimension {self.dim}")

    @property
    def input_dim(self) -> int:
        return self.dim

    @property
    def latent_dim(self) -> int:
        return self.dim

    @property
    def couplings(self) -> list[AffineCoupling]:
        return [layer for layer in self.layers if isinstance(layer, AffineCoupling)]

    def header(self) -> dict[str, Any]:
        layers: list[dict[str, Any]] = []
        for layer in self.layers:
            if isinstance(layer, Permutation):
                layers.append({"type": "permutation", "perm": list(layer.perm)})
            else:
                layers.append(
                    {
                        "type": "coupling",
                        "name": layer.conditioner.name,
                        "mask": list(layer.mask),
                        "hidden": list(layer.conditioner.dims[1:-1]),
                        "s_max": layer.s_max,
                    }
                )
        return {"kind": KIND, "dim": self.dim, "layers": layers}

    @classmethod
    def from_checkpoint(cls, header: Mapping[str, Any], params: ParamSet) -> FlowModel:
        if header.get("kind") != KIND:
            raise CheckpointError(f"Expected a {KIND} checkpoint, got {header.get('kind')!r}")
        dim = int(header["dim"])
        layers: list[FlowLayer] = []
        for entry in header["layers"]:
            if entry["type"] == "permutation":
                layers.append(Permutation(tuple(int(i) for i in entry["perm"])))
            elif entry["type"] == "coupling":
                conditioner = Mlp(entry["name"], (dim, *entry["hidden"], 2 * dim))
                missing = set(conditioner.param_names()) - set(params)
                if missing:
                    raise CheckpointError(f"Checkpoint lacks parameters: {sorted(missing)}")
                mask = tuple(int(m) for m in entry["mask"])
                layers.append(AffineCoupling(mask, conditioner, float(entry["s_max"])))
            else:
                raise CheckpointError(f"Unknown flow layer type {entry['type']!r}")
        return cls(dim=dim, layers=layers, params=params)

    # LatentTransformer protocol
    def to_latent(self, x: np.ndarray) -> np.ndarray:
        return flow_forward(self, x)[0].values

    def from_latent(self, z: Any) -> Tensor:
        return flow_inverse(self, z)


def build_flow(
    dim: int,
    n_couplings: int = 8,
    hidden: Sequence[int] = (32, 32),
    s_max: float = DEFAULT_S_MAX,
    seed: Any = 0,
    permute: bool = True,
    zero_init: bool = True,
    prefix: str = "coupling",
) -> FlowModel:
    """Create a coupling flow.

    Args:
        dim: Data dimension D (at least 2).
        n_couplings: Number of affine couplings.
        hidden: Hidden layer widths of every conditioner.
        s_max: Bound on the absolute log-scale.
        seed: Seed for conditioner weights and permutations.
        permute: Insert a seeded random permutation after every second coupling.
        zero_init: Zero the last conditioner layer, making every coupling the identity.
        prefix: Parameter-name prefix of the couplings.

    Returns:
        FlowModel.
    """
    if dim < 2:
        raise ShapeError("A coupling flow needs at least 2 dimensions")
    if n_couplings < 1:
        raise ShapeError("A coupling flow needs at least one coupling")
    weight_seed, perm_seed = as_seed_sequence(seed).spawn(2)
    perm_rng = np.random.default_rng(perm_seed)

    layers: list[FlowLayer] = []
    conditioners: list[Mlp] = []
    for i in range(n_couplings):
        mask = tuple(int(j % 2 == i % 2) for j in range(dim))
        conditioner = Mlp(f"{prefix}{i}", (dim, *hidden, 2 * dim), zero_last=zero_init)
        conditioners.append(conditioner)
        layers.append(AffineCoupling(mask, conditioner, s_max))
        if permute and i % 2 == 1 and i < n_couplings - 1:
            layers.append(Permutation(tuple(int(p) for p in perm_rng.permutation(dim))))

    model = FlowModel(dim=dim, layers=layers, params=init_params(conditioners, weight_seed))
    logger.debug(f"Built flow: dim={dim}, couplings={n_couplings}, layers={len(layers)}")
    return model


def compose_flows(first: FlowModel, second: FlowModel) -> FlowModel:
    """Flow applying ``first`` and then ``second``; parameter names must not collide."""
    if first.dim != second.dim:
        raise ShapeError("Cannot compose flows of different dimension")
    clash = set(first.params) & set(second.params)
    if clash:
        raise ValueError(f"Parameter names collide: {sorted(clash)}")
    params = first.params.copy()
    params.update(second.params)
    return FlowModel(dim=first.dim, layers=[*first.layers, *second.layers], params=params)


def _check_input(model: FlowModel, x: Tensor) -> None:
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ShapeError(f"Flow expects (B, {model.dim}) inputs, got {x.shape}")


def flow_forward(
    model: FlowModel, x: Any, weights: Mapping[str, Tensor] | None = None
) -> tuple[Tensor, Tensor]:
    """Encode x to z and accumulate the per-sample log |det dz/dx|."""
    h = as_tensor(x)
    _check_input(model, h)
    w = weights if weights is not None else model.params.constants()
    log_det = Tensor(np.zeros(h.shape[0]))
    for layer in model.layers:
        if isinstance(layer, Permutation):
            h = layer.forward(h)
        else:
            h, layer_log_det = layer.forward(w, h)
            log_det = T.add(log_det, layer_log_det)
    return h, log_det


def flow_inverse(model: FlowModel, z: Any, weights: Mapping[str, Tensor] | None = None) -> Tensor:
    """Decode z back to x."""
    h = as_tensor(z)
    _check_input(model, h)
    w = weights if weights is not None else model.params.constants()
    for layer in reversed(model.layers):
        h = layer.backward(h) if isinstance(layer, Permutation) else layer.backward(w, h)
    return h


def flow_log_likelihood(
    model: FlowModel, x: Any, weights: Mapping[str, Tensor] | None = None
) -> Tensor:
    """Mean log p(x) under a standard-normal base density."""
    z, log_det = flow_forward(model, x, weights)
    log_pz = T.sub(T.mul(-0.5, T.reduce_sum(T.square(z), axis=1)), 0.5 * model.dim * LOG_2PI)
    return T.reduce_mean(T.add(log_pz, log_det))


def flow_sample(model: FlowModel, seed: Any, n: int) -> np.ndarray:
    """Draw n samples by decoding standard-normal latents."""
    if n < 1:
        raise ValueError("n must be at least 1")
    z = np.random.default_rng(seed).standard_normal((n, model.dim))
    return flow_inverse(model, z).values
