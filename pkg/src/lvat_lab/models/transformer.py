"""Encoder/decoder protocol shared by the VAE and the flow, plus checkpoint dispatch."""

from __future__ import annotations

from collections.abc import Mapping
from typing import Any, Protocol, runtime_checkable

import numpy as np

from ..autodiff.tensor import Tensor
from ..exceptions import CheckpointError
from ..nets.layers import ParamSet
from .flow import FlowModel
from .vae import VaeModel

TRANSFORMER_KINDS = ("vae", "flow")


@runtime_checkable
class LatentTransformer(Protocol):
    """A frozen map between input space and a latent space with an N(0, I) prior."""

    kind: str
    params: ParamSet

    @property
    def input_dim(self) -> int: ...

    @property
    def latent_dim(self) -> int: ...

    def header(self) -> dict[str, Any]: ...

    def to_latent(self, x: np.ndarray) -> np.ndarray:
        """Deterministic encoding, as a plain array (no gradient)."""
        ...

    def from_latent(self, z: Any) -> Tensor:
        """Decoding; differentiable with respect to ``z``."""
        ...


def load_transformer(header: Mapping[str, Any], params: ParamSet) -> LatentTransformer:
    """Rebuild a VAE or flow from a checkpoint header and its parameters."""
    kind = header.get("kind")
    if kind == "vae":
        return VaeModel.from_checkpoint(header, params)
    if kind == "flow":
        return FlowModel.from_checkpoint(header, params)
    raise CheckpointError(f"Not a transformer checkpoint: kind={kind!r}")
